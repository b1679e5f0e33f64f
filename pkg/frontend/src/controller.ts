/**
 * Board controller: ties the API client to the board state.
 *
 * Mutations are optimistic (the card moves immediately) and serialized per
 * report; a server rejection rolls the card back and surfaces the error.
 */

import type { ApiClient } from "./api.js";
import { BoardState } from "./board.js";
import type { Criticality, ReportRow } from "./types.js";

export interface ControllerHooks {
  onError?: (message: string) => void;
  onChange?: () => void;
}

export class BoardController {
  constructor(
    private readonly api: ApiClient,
    readonly state: BoardState,
    private readonly hooks: ControllerHooks = {},
  ) {}

  private changed(): void {
    this.hooks.onChange?.();
  }

  /** Incremental poll from the current cursor. */
  async poll(): Promise<ReportRow[]> {
    const [pools, page] = await Promise.all([
      this.api.pools(),
      this.api.anomalies(this.state.cursor),
    ]);
    this.state.setPools(pools);
    const added = this.state.applyPage(page);
    if (added.length || pools.length) this.changed();
    return added;
  }

  /** Full rebuild from an empty cursor; drops local-only state. */
  async refresh(): Promise<void> {
    const pools = await this.api.pools();
    const reports: ReportRow[] = [];
    let cursor = "";
    for (;;) {
      const page = await this.api.anomalies(cursor);
      reports.push(...page.reports);
      if (!page.reports.length) break;
      cursor = page.next_cursor;
    }
    this.state.fullRefresh(pools, { reports, next_cursor: cursor });
    this.changed();
  }

  /**
   * Optimistic move; exactly one API call per accepted drag.  Returns false
   * without any call when the move is a no-op or the card is busy.
   */
  async moveCard(reportId: number, toPool: number): Promise<boolean> {
    const action = this.state.beginMove(reportId, toPool);
    if (!action) return false;
    this.changed();
    try {
      await this.api.moveAnomaly(reportId, toPool);
      this.state.commit(reportId);
      return true;
    } catch (error) {
      this.state.rollback(reportId);
      this.changed();
      this.hooks.onError?.(`move failed: ${(error as Error).message}`);
      return false;
    }
  }

  /** Optimistic badge update; setting the same level issues no API call. */
  async setCriticality(reportId: number, level: Criticality): Promise<boolean> {
    const action = this.state.beginCriticality(reportId, level);
    if (!action) return false;
    this.changed();
    try {
      await this.api.setCriticality(reportId, level);
      this.state.commit(reportId);
      return true;
    } catch (error) {
      this.state.rollback(reportId);
      this.changed();
      this.hooks.onError?.(`criticality update failed: ${(error as Error).message}`);
      return false;
    }
  }

  async createPool(name: string): Promise<void> {
    await this.api.createPool(name);
    this.state.setPools(await this.api.pools());
    this.changed();
  }

  async deletePool(poolId: number): Promise<void> {
    await this.api.deletePool(poolId);
    this.state.setPools(await this.api.pools());
    // the server reassigned the pool's reports; resync their cards
    await this.refresh();
  }
}
