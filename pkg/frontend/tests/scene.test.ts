import { describe, expect, it } from "vitest";

import { DEFAULT_ORBIT, orbitProject, render2d, render3d } from "../src/scene.js";
import { CHAIN_TREE, chainState } from "./fixtures.js";

describe("render2d", () => {
  it("echoes the service keypoints verbatim", () => {
    const state = chainState();
    const prims = render2d(state, CHAIN_TREE, 0);
    const circles = prims.filter((p) => p.kind === "circle");
    expect(circles).toHaveLength(state.keypoints2d.length);
    circles.forEach((c, i) => {
      if (c.kind !== "circle") throw new Error("unreachable");
      // the overlay is a pure view: coordinates are the payload doubles
      expect(Object.is(c.x, state.keypoints2d[i][0])).toBe(true);
      expect(Object.is(c.y, state.keypoints2d[i][1])).toBe(true);
    });
  });

  it("draws one segment per bone between payload coordinates", () => {
    const state = chainState();
    const lines = render2d(state, CHAIN_TREE, 1).filter((p) => p.kind === "line");
    expect(lines).toHaveLength(CHAIN_TREE.bone_children.length);
    const second = lines[1];
    if (second.kind !== "line") throw new Error("unreachable");
    expect(second.x1).toBe(state.keypoints2d[1][0]);
    expect(second.y2).toBe(state.keypoints2d[2][1]);
  });

  it("highlights exactly the selected bone", () => {
    const lines = render2d(chainState(), CHAIN_TREE, 2).filter((p) => p.kind === "line");
    const widths = lines.map((l) => (l.kind === "line" ? l.width : 0));
    expect(widths.filter((w) => w === 3)).toHaveLength(1);
    expect(widths[2]).toBe(3);
  });
});

describe("render3d", () => {
  it("draws the kinematic tree as parent->child segments", () => {
    const prims = render3d(chainState(), CHAIN_TREE, DEFAULT_ORBIT, 400, 0);
    expect(prims.filter((p) => p.kind === "line")).toHaveLength(3);
    expect(prims.filter((p) => p.kind === "circle")).toHaveLength(4);
  });

  it("keeps the view camera independent of the annotation camera", () => {
    const state = chainState();
    const near = render3d(state, CHAIN_TREE, { azimuth: 0, elevation: 0, zoom: 1 }, 400, 0);
    const far = render3d(state, CHAIN_TREE, { azimuth: 0, elevation: 0, zoom: 0.5 }, 400, 0);
    expect(near).not.toEqual(far);
    // zooming the inspection view never touches the 2D overlay
    expect(render2d(state, CHAIN_TREE, 0)).toEqual(render2d(state, CHAIN_TREE, 0));
  });
});

describe("orbitProject", () => {
  it("is identity-like at zero angles", () => {
    const [x, y] = orbitProject([240, 0, 0], { azimuth: 0, elevation: 0, zoom: 1 }, 400);
    expect(x).toBeCloseTo(200 + (240 * 400) / 2400, 10);
    expect(y).toBe(200);
  });

  it("full azimuth turn returns to the start", () => {
    const a = orbitProject([100, -50, 30], { azimuth: 0, elevation: 0.3, zoom: 1 }, 400);
    const b = orbitProject([100, -50, 30], { azimuth: 2 * Math.PI, elevation: 0.3, zoom: 1 }, 400);
    expect(a[0]).toBeCloseTo(b[0], 9);
    expect(a[1]).toBeCloseTo(b[1], 9);
  });
});
