/**
 * Board state: pool columns holding report cards, an incremental polling
 * cursor, and a pending-action queue for optimistic placement.
 *
 * The server is the source of truth: polled rows overwrite local card state
 * except while an optimistic action on that card is still in flight.
 */

import type { AnomaliesPage, Criticality, PoolRow, ReportRow } from "./types.js";

export interface Card {
  report: ReportRow;
  poolId: number;
  criticality: Criticality;
}

export type PendingKind = "move" | "criticality";

export interface PendingAction {
  kind: PendingKind;
  reportId: number;
  fromPool: number;
  fromCriticality: Criticality;
}

export class BoardState {
  readonly pools = new Map<number, PoolRow>();
  readonly cards = new Map<number, Card>();
  private readonly pending = new Map<number, PendingAction>();
  cursor = "";

  setPools(rows: PoolRow[]): void {
    this.pools.clear();
    for (const row of rows) this.pools.set(row.pool_id, row);
    // cards whose column disappeared fall back to the default pool
    for (const card of this.cards.values()) {
      if (!this.pools.has(card.poolId)) card.poolId = 0;
    }
  }

  /** Apply one polled page; new reports land in their predicted pool. */
  applyPage(page: AnomaliesPage): ReportRow[] {
    const added: ReportRow[] = [];
    for (const row of page.reports) {
      const existing = this.cards.get(row.report_id);
      if (existing === undefined) {
        this.cards.set(row.report_id, {
          report: row,
          poolId: row.pool_id,
          criticality: row.criticality,
        });
        added.push(row);
        continue;
      }
      existing.report = row;
      if (!this.pending.has(row.report_id)) {
        existing.poolId = row.pool_id;
        existing.criticality = row.criticality;
      }
    }
    if (page.next_cursor) this.cursor = page.next_cursor;
    return added;
  }

  /** Rebuild from scratch (an empty-cursor fetch); drops optimistic state. */
  fullRefresh(pools: PoolRow[], page: AnomaliesPage): void {
    this.cards.clear();
    this.pending.clear();
    this.cursor = "";
    this.setPools(pools);
    this.applyPage(page);
  }

  column(poolId: number): Card[] {
    return [...this.cards.values()]
      .filter((card) => card.poolId === poolId)
      .sort((a, b) => b.report.report_id - a.report.report_id);
  }

  /** Every card sits in exactly one existing column. */
  isConsistent(): boolean {
    for (const card of this.cards.values()) {
      if (!this.pools.has(card.poolId)) return false;
    }
    return true;
  }

  hasPending(reportId: number): boolean {
    return this.pending.has(reportId);
  }

  beginMove(reportId: number, toPool: number): PendingAction | null {
    const card = this.cards.get(reportId);
    if (!card || this.pending.has(reportId)) return null;
    if (!this.pools.has(toPool) || card.poolId === toPool) return null;
    const action: PendingAction = {
      kind: "move",
      reportId,
      fromPool: card.poolId,
      fromCriticality: card.criticality,
    };
    this.pending.set(reportId, action);
    card.poolId = toPool;
    return action;
  }

  beginCriticality(reportId: number, level: Criticality): PendingAction | null {
    const card = this.cards.get(reportId);
    if (!card || this.pending.has(reportId)) return null;
    if (card.criticality === level) return null;
    const action: PendingAction = {
      kind: "criticality",
      reportId,
      fromPool: card.poolId,
      fromCriticality: card.criticality,
    };
    this.pending.set(reportId, action);
    card.criticality = level;
    return action;
  }

  /** The server accepted the action; the optimistic placement stands. */
  commit(reportId: number): void {
    this.pending.delete(reportId);
  }

  /** The server rejected the action; the card returns to where it was. */
  rollback(reportId: number): void {
    const action = this.pending.get(reportId);
    if (!action) return;
    const card = this.cards.get(reportId);
    if (card) {
      if (action.kind === "move") card.poolId = action.fromPool;
      else card.criticality = action.fromCriticality;
    }
    this.pending.delete(reportId);
  }
}
