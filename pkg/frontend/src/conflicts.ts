/**
 * Conflict triage view model. Each task shows the contested subject, the
 * parties, and their verbatim evidence quotes. Resolution never mutates the
 * twin directly: the view only offers a prefilled follow-up proposal.
 */
import type { Conflict, EvidenceQuote } from "./schemas.js";

export interface ConflictTask {
  kind: Conflict["kind"];
  subject: string;
  parties: string[];
  detail: string;
  quotes: EvidenceQuote[];
  /* parties with no fetched evidence render a placeholder the curator can
     retry from */
  missingQuotes: string[];
  followUp: { subject: string; ops: Record<string, unknown>[] };
}

export function renderConflicts(conflicts: Conflict[]): ConflictTask[] {
  return conflicts.map((conflict) => {
    const quoted = new Set(conflict.quotes.map((q) => q.party));
    return {
      kind: conflict.kind,
      subject: conflict.subject,
      parties: conflict.parties,
      detail: conflict.detail,
      quotes: conflict.quotes,
      missingQuotes: conflict.parties.filter((p) => !quoted.has(p)),
      followUp: {
        subject: conflict.parties[0] ?? conflict.subject,
        ops: [
          {
            op: "set-status",
            subject: conflict.parties[0] ?? conflict.subject,
            value: "retired",
          },
        ],
      },
    };
  });
}
