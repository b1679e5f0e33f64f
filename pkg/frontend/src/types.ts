/** Wire types of the monilog service API consumed by the board. */

export type Criticality = "low" | "moderate" | "high";

export const CRITICALITY_LEVELS: Criticality[] = ["low", "moderate", "high"];

export interface ParsedRecordRow {
  seq_no: number;
  ts?: string;
  source: string;
  template_id: number;
  bindings: string[];
  slots: number[];
  payload: Record<string, string>;
}

export interface ReportRow {
  report_id: number;
  trigger: "sequential" | "quantitative";
  score: number;
  source: string;
  created_at: string;
  trigger_record: ParsedRecordRow;
  context_records: ParsedRecordRow[];
  pool_id: number;
  pool_name: string;
  criticality: Criticality;
  confidence: number;
}

export interface AnomaliesPage {
  reports: ReportRow[];
  next_cursor: string;
}

export interface PoolRow {
  pool_id: number;
  name: string;
  created_at: string;
  deletable: boolean;
  labeled_examples: number;
  report_count: number;
}

export interface TemplateRow {
  id: number;
  template: string;
  support: number;
}

export interface IngestResult {
  accepted: number;
  errors: { index: number; error: string }[];
}
