/**
 * Subgraph view model: groups a query result into the artifact substrate,
 * the skeleton (concept/functionality/responsibility) and the spine
 * (constraint/rationale), so constraint-bearing nodes stand out.
 */
import type { QueryResult, TypedEdge } from "./schemas.js";

const SKELETON_KINDS = new Set(["concept", "functionality", "responsibility"]);
const SPINE_KINDS = new Set(["constraint", "rationale"]);

const KNOWN_RELATIONS = new Set([
  "contains", "defines", "imports", "calls", "reads-writes", "depends-on",
  "configured-by", "built-into", "deployed-as", "tests",
  "operationalized-by", "requires", "uses", "decomposes-to", "f-depends-on",
  "has-responsibility", "assigned-to",
  "constrained-by", "justified-by",
  "implements", "owns", "g-depends-on",
  "anchored-to", "evidenced-by",
]);

export interface RenderedNode {
  id: string;
  hop: number;
  score: number;
  group: "artifact" | "skeleton" | "spine";
  highlighted: boolean;
}

export interface RenderedEdge {
  source: string;
  relation: string;
  target: string;
}

export interface SubgraphView {
  revision: string;
  query: string;
  seeds: string[];
  groups: Record<"artifact" | "skeleton" | "spine", RenderedNode[]>;
  edges: RenderedEdge[];
  warnings: string[];
  isEmpty: boolean;
}

function groupOf(id: string): RenderedNode["group"] {
  if (!id.startsWith("k:")) return "artifact";
  const kind = id.split(":")[1];
  if (SPINE_KINDS.has(kind)) return "spine";
  if (SKELETON_KINDS.has(kind)) return "skeleton";
  return "skeleton";
}

export function renderSubgraph(payload: QueryResult): SubgraphView {
  const ids = new Set(payload.nodes.map((n) => n.id));
  const groups: SubgraphView["groups"] = {
    artifact: [],
    skeleton: [],
    spine: [],
  };
  for (const node of payload.nodes) {
    const group = groupOf(node.id);
    groups[group].push({
      id: node.id,
      hop: node.hop,
      score: node.score,
      group,
      highlighted: group === "spine",
    });
  }
  const warnings: string[] = [];
  const edges: RenderedEdge[] = [];
  for (const edge of payload.edges as TypedEdge[]) {
    if (!ids.has(edge.source) || !ids.has(edge.target)) {
      warnings.push(
        `edge ${edge.source} -${edge.relation}-> ${edge.target} ` +
          "references a node outside the payload",
      );
      continue;
    }
    if (!KNOWN_RELATIONS.has(edge.relation)) {
      warnings.push(`unknown relation ${edge.relation}; edge kept unlabeled`);
    }
    edges.push({
      source: edge.source,
      relation: edge.relation,
      target: edge.target,
    });
  }
  return {
    revision: payload.revision,
    query: payload.query,
    seeds: payload.seeds,
    groups,
    edges,
    warnings,
    isEmpty: payload.nodes.length === 0,
  };
}
