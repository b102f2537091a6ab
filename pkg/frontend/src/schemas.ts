/**
 * Zod schemas for every service payload the UI consumes. Parsing happens at
 * the client boundary, so view models only ever see validated data.
 */
import { z } from "zod";

export const errorBody = z.object({
  error: z.object({ code: z.string(), message: z.string() }),
});

export const artifactNode = z.object({
  id: z.string(),
  layer: z.literal("artifact"),
  kind: z.string(),
  name: z.string(),
  path: z.string(),
  visibility: z.string(),
  content_hash: z.string(),
  span: z.tuple([z.number(), z.number()]).nullable().optional(),
});

export const knowledgeNode = z.object({
  id: z.string(),
  layer: z.literal("knowledge"),
  kind: z.string(),
  title: z.string(),
  summary: z.string(),
  status: z.string(),
  confidence: z.number().min(0).max(1),
});

export const anyNode = z.discriminatedUnion("layer", [
  artifactNode,
  knowledgeNode,
]);

export const typedEdge = z.object({
  source: z.string(),
  relation: z.string(),
  target: z.string(),
  attributes: z.record(z.string(), z.string()).optional().default({}),
});

export const revisions = z.object({
  revision: z.string(),
  revisions: z.array(z.string()),
  head: z.string(),
});

export const queryResult = z.object({
  version: z.literal("qres/1"),
  kind: z.string(),
  revision: z.string(),
  query: z.string(),
  seeds: z.array(z.string()),
  nodes: z.array(
    z.object({ id: z.string(), hop: z.number(), score: z.number() }),
  ),
  edges: z.array(typedEdge),
});

export const card = z.object({
  subject: z.string(),
  title: z.string(),
  bullets: z.array(z.string()),
  evidence_ids: z.array(z.string()),
  grounded_ids: z.array(z.string()),
  last_built_at: z.string(),
});

export const cardResponse = z.object({
  revision: z.string(),
  card,
  rendered: z.string(),
});

export const proposal = z.object({
  version: z.literal("prop/1"),
  id: z.string(),
  subject: z.string(),
  author: z.string(),
  note: z.string(),
  ops: z.array(z.record(z.string(), z.unknown())),
  status: z.enum(["pending", "accepted", "rejected"]),
});

export const delta = z.object({
  nodes_changed: z.array(
    z.object({
      id: z.string(),
      before: z.record(z.string(), z.unknown()),
      after: z.record(z.string(), z.unknown()),
    }),
  ),
  nodes_added: z.array(z.record(z.string(), z.unknown())),
  nodes_removed: z.array(z.string()),
  edges_added: z.array(typedEdge),
  edges_removed: z.array(typedEdge),
});

export const proposalList = z.object({
  revision: z.string(),
  proposals: z.array(proposal),
});

export const submitResponse = z.object({
  revision: z.string(),
  proposal,
  delta,
});

export const reviewResponse = z.object({
  revision: z.string(),
  proposal,
});

export const feedbackResponse = z.object({
  revision: z.string(),
  event: z.record(z.string(), z.unknown()),
});

export const evidenceQuote = z.object({
  party: z.string(),
  evidence: z.string(),
  quote: z.string(),
  source_kind: z.string(),
  source_key: z.string(),
  revision: z.string(),
});

export const conflict = z.object({
  kind: z.enum(["polarity", "exclusive-assignment"]),
  subject: z.string(),
  parties: z.array(z.string()),
  detail: z.string(),
  quotes: z.array(evidenceQuote),
});

export const conflictList = z.object({
  revision: z.string(),
  conflicts: z.array(conflict),
});

export type ArtifactNode = z.infer<typeof artifactNode>;
export type KnowledgeNode = z.infer<typeof knowledgeNode>;
export type AnyNode = z.infer<typeof anyNode>;
export type TypedEdge = z.infer<typeof typedEdge>;
export type QueryResult = z.infer<typeof queryResult>;
export type Card = z.infer<typeof card>;
export type Proposal = z.infer<typeof proposal>;
export type Delta = z.infer<typeof delta>;
export type Conflict = z.infer<typeof conflict>;
export type EvidenceQuote = z.infer<typeof evidenceQuote>;
