import { describe, expect, it } from "vitest";

import { validateQuery } from "../src/queryForm";
import type { QueryRecord } from "../src/types";

const RELS = new Set(["isPartOf", "nearestCity"]);

function record(overrides: Partial<QueryRecord> = {}): QueryRecord {
  return {
    dag: "2-inter",
    target_type: "Place",
    edges: [
      ["a1", "isPartOf", "fwd", "?target"],
      ["a2", "nearestCity", "fwd", "?target"],
    ],
    anchors: { a1: "region0", a2: "place3" },
    ...overrides,
  };
}

describe("validateQuery", () => {
  it("accepts a well-formed query", () => {
    expect(validateQuery(record(), RELS)).toEqual([]);
  });

  it("requires at least one edge", () => {
    const issues = validateQuery(record({ edges: [] }), RELS);
    expect(issues.some((i) => i.field === "edges")).toBe(true);
  });

  it("rejects non-variable objects", () => {
    const issues = validateQuery(
      record({ edges: [["a1", "isPartOf", "fwd", "region0"]] }),
      RELS,
    );
    expect(issues.some((i) => i.field.endsWith(".obj"))).toBe(true);
  });

  it("rejects unknown relations", () => {
    const issues = validateQuery(
      record({ edges: [["a1", "bogus", "fwd", "?target"]] }),
      RELS,
    );
    expect(issues.some((i) => i.message.includes("bogus"))).toBe(true);
  });

  it("rejects bad directions", () => {
    const issues = validateQuery(
      record({ edges: [["a1", "isPartOf", "up", "?target"]] }),
      RELS,
    );
    expect(issues.some((i) => i.field.endsWith(".dir"))).toBe(true);
  });

  it("requires anchors for non-variable subjects", () => {
    const issues = validateQuery(record({ anchors: { a1: "region0" } }), RELS);
    expect(issues.some((i) => i.field === "anchors.a2")).toBe(true);
  });

  it("requires ?target as the unique sink", () => {
    const noTarget = validateQuery(
      record({ edges: [["a1", "isPartOf", "fwd", "?v1"]] }),
      RELS,
    );
    expect(noTarget.length).toBeGreaterThan(0);
    const dangling = validateQuery(
      record({
        edges: [
          ["a1", "isPartOf", "fwd", "?target"],
          ["a2", "nearestCity", "fwd", "?v1"],
        ],
      }),
      RELS,
    );
    expect(dangling.some((i) => i.message.includes("?v1"))).toBe(true);
  });

  it("rejects cyclic pattern graphs", () => {
    const issues = validateQuery(
      record({
        edges: [
          ["?v1", "isPartOf", "fwd", "?v2"],
          ["?v2", "isPartOf", "fwd", "?v1"],
          ["?v2", "nearestCity", "fwd", "?target"],
        ],
        anchors: {},
      }),
      RELS,
    );
    expect(issues.some((i) => i.message.includes("DAG"))).toBe(true);
  });
});
