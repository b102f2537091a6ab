/**
 * Review queue view model: pending proposals with approve/reject actions.
 * The queue only mutates twin state through the client's review POST; a
 * failed action leaves the item pending and surfaces the error inline.
 */
import { ApiError, TwinClient } from "./client.js";
import type { Delta, Proposal } from "./schemas.js";

export interface QueueItem {
  proposal: Proposal;
  /* populated lazily when the curator expands the item */
  delta?: Delta;
  error?: string;
}

export function describeDelta(delta: Delta): string[] {
  const lines: string[] = [];
  for (const change of delta.nodes_changed) {
    const fields = Object.keys(change.after).filter(
      (key) => JSON.stringify(change.before[key]) !==
        JSON.stringify(change.after[key]),
    );
    lines.push(`~ ${change.id} (${fields.join(", ")})`);
  }
  for (const node of delta.nodes_added) lines.push(`+ ${node.id as string}`);
  for (const id of delta.nodes_removed) lines.push(`- ${id}`);
  for (const edge of delta.edges_added)
    lines.push(`+ ${edge.source} -${edge.relation}-> ${edge.target}`);
  for (const edge of delta.edges_removed)
    lines.push(`- ${edge.source} -${edge.relation}-> ${edge.target}`);
  return lines;
}

export class ReviewQueue {
  items: QueueItem[] = [];
  revision = "";

  constructor(private readonly client: TwinClient) {}

  get isEmpty(): boolean {
    return this.items.length === 0;
  }

  async load(): Promise<void> {
    const payload = await this.client.proposals("pending");
    this.revision = payload.revision;
    this.items = payload.proposals.map((proposal) => ({ proposal }));
  }

  /** One review POST per action; the item leaves the queue only on success. */
  async approve(proposalId: string): Promise<void> {
    await this.act(proposalId, "accept");
  }

  async reject(proposalId: string, note = ""): Promise<void> {
    await this.act(proposalId, "reject", note);
  }

  private async act(
    proposalId: string,
    verdict: "accept" | "reject",
    note = "",
  ): Promise<void> {
    const item = this.items.find((i) => i.proposal.id === proposalId);
    if (item === undefined) {
      throw new Error(`proposal ${proposalId} is not in the queue`);
    }
    try {
      const outcome = await this.client.review(proposalId, verdict, note);
      this.revision = outcome.revision;
      this.items = this.items.filter((i) => i.proposal.id !== proposalId);
    } catch (err) {
      item.error = err instanceof ApiError
        ? `${err.code}: ${err.message}`
        : String(err);
    }
  }
}
