import type { EntityInfo, Marker, StudyArea } from "./types";

/**
 * Plain Cartesian canvas map over the study area (planar meters). Synthetic
 * datasets have no real-world projection, so no tile layer is attempted;
 * the transform is a pure affine fit of the study area into the canvas.
 */
export class MapView {
  private area: StudyArea | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly margin = 12,
  ) {}

  setStudyArea(area: StudyArea): void {
    this.area = area;
  }

  toScreen(planar: [number, number]): [number, number] {
    const a = this.area!;
    const w = this.canvas.width - 2 * this.margin;
    const h = this.canvas.height - 2 * this.margin;
    const sx = (planar[0] - a.min[0]) / (a.max[0] - a.min[0]);
    const sy = (planar[1] - a.min[1]) / (a.max[1] - a.min[1]);
    return [this.margin + sx * w, this.canvas.height - this.margin - sy * h];
  }

  toPlanar(screen: [number, number]): [number, number] {
    const a = this.area!;
    const w = this.canvas.width - 2 * this.margin;
    const h = this.canvas.height - 2 * this.margin;
    const sx = (screen[0] - this.margin) / w;
    const sy = (this.canvas.height - this.margin - screen[1]) / h;
    return [
      a.min[0] + sx * (a.max[0] - a.min[0]),
      a.min[1] + sy * (a.max[1] - a.min[1]),
    ];
  }

  render(
    entities: EntityInfo[],
    markers: Marker[],
    clicked: [number, number] | null,
  ): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.area) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);

    ctx.fillStyle = "#f7f9fb";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    // faint base layer of all entities
    ctx.fillStyle = "#c5d2dd";
    for (const e of entities) {
      const [x, y] = this.toScreen(e.point);
      ctx.fillRect(x - 1, y - 1, 2, 2);
    }

    // result boxes first so points stay visible
    for (const m of markers) {
      if (!m.bbox) continue;
      const [x0, y0] = this.toScreen([m.bbox[0], m.bbox[1]]);
      const [x1, y1] = this.toScreen([m.bbox[2], m.bbox[3]]);
      ctx.strokeStyle = m.top ? "#d97706" : "#2563eb";
      ctx.lineWidth = m.top ? 2 : 1;
      ctx.strokeRect(
        Math.min(x0, x1),
        Math.min(y0, y1),
        Math.abs(x1 - x0),
        Math.abs(y1 - y0),
      );
    }
    for (const m of markers) {
      if (!m.point) continue;
      const [x, y] = this.toScreen(m.point);
      ctx.beginPath();
      ctx.arc(x, y, m.top ? 8 : 5, 0, 2 * Math.PI);
      ctx.fillStyle = m.top ? "#d97706" : "#2563eb";
      ctx.fill();
      ctx.fillStyle = "#ffffff";
      ctx.font = "9px sans-serif";
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(String(m.rank), x, y);
    }

    if (clicked) {
      const [x, y] = this.toScreen(clicked);
      ctx.strokeStyle = "#dc2626";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(x, y - 9);
      ctx.lineTo(x - 8, y + 7);
      ctx.lineTo(x + 8, y + 7);
      ctx.closePath();
      ctx.stroke();
    }
  }
}
