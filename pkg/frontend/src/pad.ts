// XY pad: a square canvas mapped to the latent range [-8, 8] on both
// axes, with markers at the unconditioned prior mean (0, 0) and the
// conditioned mean (5, 5) so the usable region is visible. Screen y
// grows downward, latent y upward.

import { PAD_RANGE } from "./protocol.js";

export function padToLatent(
  px: number,
  py: number,
  width: number,
  height: number,
  range = PAD_RANGE,
): [number, number] {
  const x = (px / width) * 2 * range - range;
  const y = range - (py / height) * 2 * range;
  return [
    Math.min(range, Math.max(-range, x)),
    Math.min(range, Math.max(-range, y)),
  ];
}

export function latentToPad(
  x: number,
  y: number,
  width: number,
  height: number,
  range = PAD_RANGE,
): [number, number] {
  return [((x + range) / (2 * range)) * width, ((range - y) / (2 * range)) * height];
}

export class XYPad {
  private readonly canvas: HTMLCanvasElement;
  private readonly onDrag: (x: number, y: number) => void;
  private dragging = false;
  private point: [number, number] = [0, 0];

  constructor(canvas: HTMLCanvasElement, onDrag: (x: number, y: number) => void) {
    this.canvas = canvas;
    this.onDrag = onDrag;
    canvas.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      canvas.setPointerCapture(e.pointerId);
      this.handle(e);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (this.dragging) this.handle(e);
    });
    canvas.addEventListener("pointerup", (e) => {
      this.dragging = false;
      canvas.releasePointerCapture(e.pointerId);
    });
  }

  private handle(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const [x, y] = padToLatent(
      e.clientX - rect.left,
      e.clientY - rect.top,
      rect.width,
      rect.height,
    );
    this.point = [x, y];
    this.onDrag(x, y);
  }

  setPoint(x: number, y: number): void {
    this.point = [x, y];
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#15161a";
    ctx.fillRect(0, 0, w, h);
    ctx.strokeStyle = "#333";
    ctx.beginPath();
    ctx.moveTo(w / 2, 0);
    ctx.lineTo(w / 2, h);
    ctx.moveTo(0, h / 2);
    ctx.lineTo(w, h / 2);
    ctx.stroke();

    const ring = (lx: number, ly: number, color: string, label: string) => {
      const [px, py] = latentToPad(lx, ly, w, h);
      ctx.strokeStyle = color;
      ctx.beginPath();
      ctx.arc(px, py, 7, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.fillStyle = color;
      ctx.font = "11px sans-serif";
      ctx.fillText(label, px + 10, py - 6);
    };
    ring(0, 0, "#777", "off (0,0)");
    ring(5, 5, "#e2b714", "on (5,5)");

    const [cx, cy] = latentToPad(this.point[0], this.point[1], w, h);
    ctx.fillStyle = "#4fc3f7";
    ctx.beginPath();
    ctx.arc(cx, cy, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
}
