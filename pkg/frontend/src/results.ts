/** Results table rows, displaying service values verbatim. */

import { ResultsPayload, SummaryPayload } from "./api.js";

export interface ResultRow {
  metric: string;
  value: string;
  detail: string;
}

/** Render a number exactly as the service sent it; never recompute or round. */
export function verbatim(value: number): string {
  return String(value);
}

function summaryRow(metric: string, summary: SummaryPayload | null): ResultRow | null {
  if (summary === null) return null;
  const [low, high] = summary.ci;
  return {
    metric,
    value: verbatim(summary.mean),
    detail: `95% CI [${verbatim(low)}, ${verbatim(high)}], n=${summary.n}`,
  };
}

export function resultRows(payload: ResultsPayload): ResultRow[] {
  const rows: ResultRow[] = [];
  const mos = summaryRow("MOS", payload.mos);
  if (mos) rows.push(mos);
  const smos = summaryRow("S-MOS", payload.smos);
  if (smos) rows.push(smos);
  if (payload.intelligibility !== null) {
    rows.push({
      metric: "Intelligibility score",
      value: verbatim(payload.intelligibility),
      detail: `n=${payload.intelligibility_n}`,
    });
  }
  return rows;
}

export function hasAnyResults(payload: ResultsPayload): boolean {
  return resultRows(payload).length > 0;
}
