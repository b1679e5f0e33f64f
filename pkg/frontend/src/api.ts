/**
 * Thin client for the monilog service API.
 *
 * Every state-mutating request the board can make goes through this class,
 * so the endpoints below are the complete mutation surface of the UI.
 */

import type { AnomaliesPage, Criticality, IngestResult, PoolRow, TemplateRow } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  anomalies(cursor: string, limit = 200): Promise<AnomaliesPage> {
    const params = new URLSearchParams({ limit: String(limit) });
    if (cursor) params.set("cursor", cursor);
    return this.request(`/anomalies?${params}`);
  }

  moveAnomaly(reportId: number, poolId: number): Promise<{ changed: boolean }> {
    return this.request(`/anomalies/${reportId}/pool`, {
      method: "POST",
      body: JSON.stringify({ pool_id: poolId, actor: "board" }),
    });
  }

  setCriticality(reportId: number, level: Criticality): Promise<{ changed: boolean }> {
    return this.request(`/anomalies/${reportId}/criticality`, {
      method: "POST",
      body: JSON.stringify({ level, actor: "board" }),
    });
  }

  pools(): Promise<PoolRow[]> {
    return this.request("/pools");
  }

  createPool(name: string): Promise<{ pool_id: number; name: string }> {
    return this.request("/pools", { method: "POST", body: JSON.stringify({ name }) });
  }

  deletePool(poolId: number): Promise<{ deleted: number }> {
    return this.request(`/pools/${poolId}`, { method: "DELETE" });
  }

  templates(): Promise<TemplateRow[]> {
    return this.request("/templates");
  }

  ingest(records: object[]): Promise<IngestResult> {
    return this.request("/ingest", { method: "POST", body: JSON.stringify({ records }) });
  }
}
