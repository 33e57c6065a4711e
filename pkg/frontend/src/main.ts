import { ApiClient } from "./api";
import { AppController, type LiftView, type AnswerView } from "./controller";
import { MapView } from "./map";
import type { EntityInfo, QueryEdge, QueryRecord } from "./types";

// server address: ?server=... query param, else same origin
function serverUrl(): string {
  const param = new URLSearchParams(window.location.search).get("server");
  return (param ?? window.location.origin).replace(/\/$/, "");
}

const api = new ApiClient(serverUrl());
const controller = new AppController(api);

const canvas = document.getElementById("map") as HTMLCanvasElement;
const mapView = new MapView(canvas);
const relationSelect = document.getElementById("relation") as HTMLSelectElement;
const dirSelect = document.getElementById("dir") as HTMLSelectElement;
const kInput = document.getElementById("k") as HTMLInputElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const resultsPanel = document.getElementById("results") as HTMLOListElement;
const queryStatus = document.getElementById("query-status") as HTMLDivElement;

let baseEntities: EntityInfo[] = [];
let lastClick: [number, number] | null = null;

function showBanner(text: string | null): void {
  banner.textContent = text ?? "";
  banner.style.display = text ? "block" : "none";
}

function renderPanel(view: LiftView | AnswerView): void {
  resultsPanel.innerHTML = "";
  for (const m of view.markers) {
    const li = document.createElement("li");
    li.textContent = `${m.entity}  (${m.score.toFixed(4)})`;
    if (m.top) li.classList.add("top");
    resultsPanel.appendChild(li);
  }
}

async function handleClick(event: MouseEvent): Promise<void> {
  const rect = canvas.getBoundingClientRect();
  const planar = mapView.toPlanar([
    event.clientX - rect.left,
    event.clientY - rect.top,
  ]);
  const view = await controller.onMapClick(planar);
  if (view.status === "no-relation") {
    showBanner(view.message ?? "pick a relation first");
    return;
  }
  if (view.status === "stale") return;
  if (view.status === "error") {
    showBanner(view.message ?? "request failed");
    return;
  }
  showBanner(view.clamped ? "click was outside the study area; clamped" : null);
  lastClick = view.clicked ?? null;
  renderPanel(view);
  mapView.render(baseEntities, view.markers, lastClick);
}

function readQueryForm(): QueryRecord {
  const edges: QueryEdge[] = [];
  for (const row of document.querySelectorAll<HTMLElement>(".edge-row")) {
    const get = (name: string) =>
      (row.querySelector(`[name=${name}]`) as HTMLInputElement).value.trim();
    if (!get("rel")) continue;
    edges.push([get("subj"), get("rel"), get("dir"), get("obj")]);
  }
  const anchors: Record<string, string> = {};
  for (const row of document.querySelectorAll<HTMLElement>(".anchor-row")) {
    const label = (row.querySelector("[name=label]") as HTMLInputElement).value.trim();
    const entity = (row.querySelector("[name=entity]") as HTMLInputElement).value.trim();
    if (label && entity) anchors[label] = entity;
  }
  return {
    dag: (document.getElementById("q-dag") as HTMLInputElement).value.trim(),
    target_type: (
      document.getElementById("q-target-type") as HTMLInputElement
    ).value.trim(),
    edges,
    anchors,
  };
}

async function handleRunQuery(): Promise<void> {
  const view = await controller.runQuery(readQueryForm());
  if (view.status === "invalid") {
    queryStatus.textContent = view.issues
      .map((i) => `${i.field}: ${i.message}`)
      .join("; ");
    return;
  }
  if (view.status === "stale") return;
  if (view.status === "error") {
    queryStatus.textContent = view.message ?? "request failed";
    return;
  }
  queryStatus.textContent = "";
  renderPanel(view);
  mapView.render(baseEntities, view.markers, null);
}

async function boot(): Promise<void> {
  await controller.init();
  mapView.setStudyArea(controller.meta!.study_area);
  const area = controller.meta!.study_area;
  baseEntities = await api.entities([
    area.min[0],
    area.min[1],
    area.max[0],
    area.max[1],
  ]);
  for (const rel of controller.relations) {
    const opt = document.createElement("option");
    opt.value = rel.relation;
    opt.textContent = rel.relation;
    relationSelect.appendChild(opt);
  }
  relationSelect.addEventListener("change", () => {
    controller.selectRelation(
      relationSelect.value || null,
      dirSelect.value as "fwd" | "inv",
    );
  });
  dirSelect.addEventListener("change", () => {
    controller.selectRelation(
      relationSelect.value || null,
      dirSelect.value as "fwd" | "inv",
    );
  });
  kInput.addEventListener("change", () => {
    controller.k = Math.max(1, Number(kInput.value) || 10);
  });
  canvas.addEventListener("click", (e) => void handleClick(e));
  document
    .getElementById("run-query")!
    .addEventListener("click", () => void handleRunQuery());
  mapView.render(baseEntities, [], null);
}

void boot().catch((err) => showBanner(`failed to reach server: ${err}`));
