import type { QueryEdge, QueryRecord } from "./types";

export interface ValidationIssue {
  field: string;
  message: string;
}

const TARGET = "?target";

/**
 * Client-side validation of a form-built query against the service's JSONL
 * schema: variables start with "?", the target is the unique sink, subjects
 * are anchored or variables, the graph is acyclic, and relation names come
 * from the server's catalog. Nothing is sent while issues remain.
 */
export function validateQuery(
  record: QueryRecord,
  knownRelations: ReadonlySet<string>,
): ValidationIssue[] {
  const issues: ValidationIssue[] = [];
  if (!record.dag) issues.push({ field: "dag", message: "required" });
  if (!record.target_type)
    issues.push({ field: "target_type", message: "required" });
  if (!record.edges?.length) {
    issues.push({ field: "edges", message: "at least one pattern required" });
    return issues;
  }

  const outDegree = new Map<string, number>();
  record.edges.forEach((edge, i) => {
    if (edge.length !== 4) {
      issues.push({ field: `edges.${i}`, message: "expected [subj, rel, dir, obj]" });
      return;
    }
    const [subj, rel, dir, obj] = edge;
    if (!obj.startsWith("?"))
      issues.push({ field: `edges.${i}.obj`, message: "object must be a variable" });
    if (dir !== "fwd" && dir !== "inv")
      issues.push({ field: `edges.${i}.dir`, message: "dir must be fwd or inv" });
    if (!knownRelations.has(rel))
      issues.push({ field: `edges.${i}.rel`, message: `unknown relation "${rel}"` });
    if (!subj.startsWith("?") && !record.anchors[subj])
      issues.push({ field: `anchors.${subj}`, message: "anchor entity required" });
    outDegree.set(subj, (outDegree.get(subj) ?? 0) + 1);
    if (!outDegree.has(obj)) outDegree.set(obj, 0);
  });

  const sinks = [...outDegree.entries()]
    .filter(([node, deg]) => deg === 0 && node.startsWith("?"))
    .map(([node]) => node);
  if (!sinks.includes(TARGET))
    issues.push({ field: "edges", message: "?target must be the final object" });
  else if (sinks.length > 1)
    issues.push({
      field: "edges",
      message: `every variable must lead to ?target (dangling: ${sinks
        .filter((s) => s !== TARGET)
        .join(", ")})`,
    });

  if (hasCycle(record.edges)) {
    issues.push({ field: "edges", message: "patterns must form a DAG" });
  }
  return issues;
}

function hasCycle(edges: QueryEdge[]): boolean {
  const succ = new Map<string, string[]>();
  const indeg = new Map<string, number>();
  for (const [subj, , , obj] of edges) {
    succ.set(subj, [...(succ.get(subj) ?? []), obj]);
    indeg.set(obj, (indeg.get(obj) ?? 0) + 1);
    if (!indeg.has(subj)) indeg.set(subj, 0);
  }
  const queue = [...indeg.entries()].filter(([, d]) => d === 0).map(([n]) => n);
  let seen = 0;
  while (queue.length) {
    const node = queue.shift()!;
    seen += 1;
    for (const next of succ.get(node) ?? []) {
      const d = indeg.get(next)! - 1;
      indeg.set(next, d);
      if (d === 0) queue.push(next);
    }
  }
  return seen !== indeg.size;
}
