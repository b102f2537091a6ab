/**
 * End-to-end: drives the real service over HTTP against the bundled payment
 * fixture. The request log doubles as an audit trail proving the UI only
 * writes through the permitted endpoints.
 */
import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { TwinClient } from "../src/client.js";
import { renderConflicts } from "../src/conflicts.js";
import { ReviewQueue } from "../src/reviewQueue.js";
import { renderSubgraph } from "../src/subgraph.js";

const BUNDLE = fileURLToPath(
  new URL("../../tests/fixtures/payfix", import.meta.url),
);
const PORT = 18000 + (process.pid % 1000);
const BASE = `http://127.0.0.1:${PORT}`;

const ALLOWED_WRITES = [
  /^\/proposals$/,
  /^\/proposals\/[^/]+\/review$/,
  /^\/feedback$/,
];

let storeDir: string;
let server: ChildProcess;
let client: TwinClient;

function run(args: string[]): Promise<void> {
  return new Promise((done, fail) => {
    const child = spawn("codetwin", args, { stdio: "ignore" });
    child.on("exit", (code) =>
      code === 0 ? done() : fail(new Error(`codetwin ${args[0]} -> ${code}`)),
    );
    child.on("error", fail);
  });
}

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/revisions`);
      if (response.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((tick) => setTimeout(tick, 100));
  }
  throw new Error("service never became reachable");
}

beforeAll(async () => {
  storeDir = join(mkdtempSync(join(tmpdir(), "twin-e2e-")), "store");
  await run(["build", BUNDLE, storeDir]);
  server = spawn("codetwin", ["serve", storeDir, "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForService();
  client = new TwinClient(BASE);

  // plant the contradictory-constraints task: an accepted proposal claims
  // the validator supports the ordering rule its commit history forbids
  const planted = await client.submitProposal(
    "a:pay/validator.py",
    "kim",
    "planted for triage",
    [
      {
        op: "add-edge",
        edge: {
          source: "a:pay/validator.py",
          relation: "constrained-by",
          target: "k:constraint:requests-must-reach-the-mainframe-in-order",
          attributes: { polarity: "supports" },
        },
      },
    ],
  );
  await client.review(planted.proposal.id, "accept");

  // two proposals left pending for the review queue
  await client.submitProposal(
    "k:concept:payment-validation",
    "kim",
    "tighten wording",
    [
      {
        op: "set-summary",
        subject: "k:concept:payment-validation",
        value: "ordering rules for payment requests",
      },
    ],
  );
  await client.submitProposal(
    "k:functionality:charge-submit-valid",
    "ana",
    "",
    [
      {
        op: "set-status",
        subject: "k:functionality:charge-submit-valid",
        value: "curated",
      },
    ],
  );
}, 60_000);

afterAll(() => {
  server?.kill();
  if (storeDir !== undefined) {
    rmSync(resolve(storeDir, ".."), { recursive: true, force: true });
  }
});

describe("curation UI against the live fixture service", () => {
  it("approves one of two pending proposals with a single review POST",
    async () => {
      const queue = new ReviewQueue(client);
      await queue.load();
      expect(queue.items).toHaveLength(2);

      const before = client.requestLog.length;
      await queue.approve(queue.items[0].proposal.id);
      const issued = client.requestLog.slice(before);
      expect(issued).toHaveLength(1);
      expect(issued[0].method).toBe("POST");
      expect(issued[0].path).toMatch(/^\/proposals\/[^/]+\/review$/);

      expect(queue.items).toHaveLength(1);
      await queue.load();
      expect(queue.items).toHaveLength(1);
    });

  it("shows the planted conflict with both evidence quotes", async () => {
    const payload = await client.conflicts();
    const tasks = renderConflicts(payload.conflicts);
    expect(tasks).toHaveLength(1);
    const task = tasks[0];
    expect(task.kind).toBe("polarity");
    expect(task.subject).toBe("a:pay/validator.py");
    const quotes = task.quotes.map((q) => q.quote);
    expect(quotes).toContain(
      "add sync lock because mainframe requires ordered requests",
    );
    expect(quotes).toContain("requests must reach the mainframe in order");
    expect(task.missingQuotes).toEqual([]);
  });

  it("renders the walkthrough subgraph with its constraint highlighted",
    async () => {
      const payload = await client.query(
        "refactor payment validation to async",
      );
      const view = renderSubgraph(payload);
      expect(view.groups.spine.map((n) => n.id)).toContain(
        "k:constraint:add-sync-lock-because-mainframe-requires-" +
          "ordered-requests",
      );
      const card = await client.card(
        "k:constraint:add-sync-lock-because-mainframe-requires-" +
          "ordered-requests",
      );
      expect(card.rendered).toContain(
        "add sync lock because mainframe requires ordered requests",
      );
    });

  it("never wrote outside the permitted endpoints", () => {
    const writes = client.requestLog.filter((r) => r.mutating);
    expect(writes.length).toBeGreaterThan(0);
    for (const write of writes) {
      expect(
        ALLOWED_WRITES.some((pattern) => pattern.test(write.path)),
        `unexpected write to ${write.path}`,
      ).toBe(true);
    }
    // every other request in the session was a plain GET or a read-only
    // query/impact/context POST
    for (const entry of client.requestLog) {
      if (entry.mutating) continue;
      expect(
        entry.method === "GET" ||
          ["/query", "/impact", "/context"].includes(entry.path),
        `unexpected request ${entry.method} ${entry.path}`,
      ).toBe(true);
    }
  });
});
