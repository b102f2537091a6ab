export { TwinClient, ApiError } from "./client.js";
export type { LoggedRequest } from "./client.js";
export { ReviewQueue, describeDelta } from "./reviewQueue.js";
export type { QueueItem } from "./reviewQueue.js";
export { renderSubgraph } from "./subgraph.js";
export type { SubgraphView, RenderedNode } from "./subgraph.js";
export { renderConflicts } from "./conflicts.js";
export type { ConflictTask } from "./conflicts.js";
export * as schemas from "./schemas.js";
