import { describe, expect, it } from "vitest";
import { latentToPad, padToLatent } from "../src/pad.js";
import { PAD_RANGE } from "../src/protocol.js";

const W = 320;
const H = 320;

describe("padToLatent", () => {
  it("maps the center pixel to the origin", () => {
    const [x, y] = padToLatent(W / 2, H / 2, W, H);
    expect(x).toBeCloseTo(0, 10);
    expect(y).toBeCloseTo(0, 10);
  });

  it("maps corners to the latent extremes with y pointing up", () => {
    expect(padToLatent(0, 0, W, H)).toEqual([-PAD_RANGE, PAD_RANGE]);
    expect(padToLatent(W, H, W, H)).toEqual([PAD_RANGE, -PAD_RANGE]);
    expect(padToLatent(W, 0, W, H)).toEqual([PAD_RANGE, PAD_RANGE]);
    expect(padToLatent(0, H, W, H)).toEqual([-PAD_RANGE, -PAD_RANGE]);
  });

  it("clamps pointer positions outside the canvas", () => {
    expect(padToLatent(-50, 2 * H, W, H)).toEqual([-PAD_RANGE, -PAD_RANGE]);
    expect(padToLatent(9999, -9999, W, H)).toEqual([PAD_RANGE, PAD_RANGE]);
  });

  it("honors a custom range", () => {
    expect(padToLatent(W, H / 2, W, H, 2)).toEqual([2, 0]);
  });
});

describe("latentToPad", () => {
  it("inverts padToLatent inside the canvas", () => {
    for (const [px, py] of [
      [0, 0],
      [160, 160],
      [17, 293],
      [320, 1],
    ]) {
      const [x, y] = padToLatent(px, py, W, H);
      const [qx, qy] = latentToPad(x, y, W, H);
      expect(qx).toBeCloseTo(px, 9);
      expect(qy).toBeCloseTo(py, 9);
    }
  });

  it("places the prior anchors where the pad draws them", () => {
    // off pattern (0,0) at the center, on pattern (5,5) up and right
    expect(latentToPad(0, 0, W, H)).toEqual([W / 2, H / 2]);
    const [px, py] = latentToPad(5, 5, W, H);
    expect(px).toBeGreaterThan(W / 2);
    expect(py).toBeLessThan(H / 2);
  });
});
