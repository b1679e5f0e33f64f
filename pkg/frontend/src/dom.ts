/** DOM rendering and drag/drop wiring for the triage board. */

import { BoardController } from "./controller.js";
import type { Card } from "./board.js";
import { CRITICALITY_LEVELS, type Criticality, type TemplateRow } from "./types.js";

export class BoardView {
  private templateById = new Map<number, string>();

  constructor(
    private readonly root: HTMLElement,
    private readonly controller: BoardController,
  ) {}

  setTemplates(rows: TemplateRow[]): void {
    this.templateById = new Map(rows.map((row) => [row.id, row.template]));
  }

  showBanner(message: string | null): void {
    let banner = this.root.querySelector<HTMLElement>(".banner");
    if (!banner) {
      banner = document.createElement("div");
      banner.className = "banner";
      this.root.prepend(banner);
    }
    banner.textContent = message ?? "";
    banner.style.display = message ? "block" : "none";
  }

  toast(message: string): void {
    const el = document.createElement("div");
    el.className = "toast";
    el.textContent = message;
    this.root.append(el);
    setTimeout(() => el.remove(), 4000);
  }

  render(): void {
    let columns = this.root.querySelector<HTMLElement>(".columns");
    if (!columns) {
      columns = document.createElement("div");
      columns.className = "columns";
      this.root.append(columns);
    }
    columns.textContent = "";
    const state = this.controller.state;
    for (const pool of [...state.pools.values()].sort((a, b) => a.pool_id - b.pool_id)) {
      const column = document.createElement("section");
      column.className = "column";
      column.dataset.poolId = String(pool.pool_id);

      const header = document.createElement("header");
      header.textContent = `${pool.name} (${state.column(pool.pool_id).length})`;
      if (pool.deletable) {
        const del = document.createElement("button");
        del.textContent = "x";
        del.title = "delete pool";
        del.addEventListener("click", () => void this.controller.deletePool(pool.pool_id));
        header.append(del);
      }
      column.append(header);

      column.addEventListener("dragover", (event) => event.preventDefault());
      column.addEventListener("drop", (event) => {
        event.preventDefault();
        const raw = event.dataTransfer?.getData("text/report-id");
        if (!raw) return;
        void this.controller.moveCard(Number(raw), pool.pool_id).then(() => this.render());
      });

      for (const card of state.column(pool.pool_id)) {
        column.append(this.renderCard(card));
      }
      columns.append(column);
    }
  }

  private renderCard(card: Card): HTMLElement {
    const el = document.createElement("article");
    el.className = `card trigger-${card.report.trigger} crit-${card.criticality}`;
    el.draggable = true;
    el.dataset.reportId = String(card.report.report_id);
    el.addEventListener("dragstart", (event) => {
      event.dataTransfer?.setData("text/report-id", String(card.report.report_id));
    });

    const title = document.createElement("h4");
    title.textContent = `#${card.report.report_id} ${card.report.trigger} · ${card.report.source}`;
    el.append(title);

    const summary = document.createElement("p");
    const template = this.templateById.get(card.report.trigger_record.template_id);
    summary.textContent = template ?? `template ${card.report.trigger_record.template_id}`;
    el.append(summary);

    const meta = document.createElement("small");
    meta.textContent = `score ${card.report.score.toFixed(2)} · ${card.report.created_at}`;
    el.append(meta);

    const badge = document.createElement("select");
    badge.className = "criticality";
    for (const level of CRITICALITY_LEVELS) {
      const option = document.createElement("option");
      option.value = level;
      option.textContent = level;
      option.selected = level === card.criticality;
      badge.append(option);
    }
    badge.addEventListener("change", () => {
      void this.controller
        .setCriticality(card.report.report_id, badge.value as Criticality)
        .then(() => this.render());
    });
    el.append(badge);
    return el;
  }

  renderSettings(): void {
    let pane = this.root.querySelector<HTMLElement>(".settings");
    if (pane) return;
    pane = document.createElement("div");
    pane.className = "settings";
    const input = document.createElement("input");
    input.placeholder = "new pool name";
    const button = document.createElement("button");
    button.textContent = "create pool";
    button.addEventListener("click", () => {
      const name = input.value.trim();
      if (!name) return;
      void this.controller.createPool(name).then(() => {
        input.value = "";
        this.render();
      });
    });
    pane.append(input, button);
    this.root.prepend(pane);
  }
}
