import { describe, expect, it } from "vitest";
import {
  TileCache,
  groundPerPixel,
  tileExtent,
  tileScreenOrigin,
  visibleTiles,
  zoomAbout,
  type ViewportState,
} from "../src/tiles.js";
import type { Metadata } from "../src/types.js";

const meta: Metadata = {
  bounds: { north_min: -10, north_max: 90, east_min: -20, east_max: 60 },
  cubes: [],
  wavelengths: [500],
  ground_height: 95,
  ground_estimated: false,
  tile_size: 256,
  max_zoom: 10,
  root_side: 100, // square envelope of the 100 x 80 bounds
  generation: 0,
  params: { wavelengths: [500], mode: "raw", stretch: "none", cube_range: null, ground_height: 95 },
};

function view(partial: Partial<ViewportState> = {}): ViewportState {
  return {
    centerNorth: 40,
    centerEast: 20,
    zoom: 2,
    width: 512,
    height: 512,
    ...partial,
  };
}

describe("tile pyramid", () => {
  it("halves tile extent per zoom level", () => {
    expect(tileExtent(meta, 0)).toBe(100);
    expect(tileExtent(meta, 3)).toBe(12.5);
  });

  it("zooming in one level quadruples the visible tile count", () => {
    // viewport smaller than the covered area so no clamping interferes
    const v1 = view({ zoom: 3, width: 300, height: 300 });
    const v2 = { ...v1, zoom: 4 };
    const n1 = visibleTiles(meta, v1).length;
    const n2 = visibleTiles(meta, v2).length;
    expect(n2).toBeGreaterThanOrEqual(4 * (Math.sqrt(n1) - 1) ** 2);
    expect(n2).toBeLessThanOrEqual(4 * (Math.sqrt(n1) + 1) ** 2);
  });

  it("visible set is exactly the tiles intersecting the viewport", () => {
    const v = view({ zoom: 3 });
    const tiles = visibleTiles(meta, v);
    const gpp = groundPerPixel(meta, v.zoom);
    const west = v.centerEast - (v.width / 2) * gpp;
    const east = v.centerEast + (v.width / 2) * gpp;
    const north = v.centerNorth + (v.height / 2) * gpp;
    const south = v.centerNorth - (v.height / 2) * gpp;
    const extent = tileExtent(meta, v.zoom);
    const n = 1 << v.zoom;
    for (let ty = 0; ty < n; ty++) {
      for (let tx = 0; tx < n; tx++) {
        const tWest = meta.bounds.east_min + tx * extent;
        const tNorth = meta.bounds.north_max - ty * extent;
        const intersects =
          tWest < east && tWest + extent > west && tNorth > south && tNorth - extent < north;
        const listed = tiles.some((t) => t.tx === tx && t.ty === ty);
        expect(listed).toBe(intersects);
      }
    }
  });

  it("pan by half a tile only exposes new tiles on one edge", () => {
    const v1 = view({ zoom: 3 });
    const extent = tileExtent(meta, 3);
    const v2 = { ...v1, centerEast: v1.centerEast + extent / 2 };
    const a = new Set(visibleTiles(meta, v1).map((t) => `${t.tx}/${t.ty}`));
    const b = visibleTiles(meta, v2).map((t) => `${t.tx}/${t.ty}`);
    const fresh = b.filter((k) => !a.has(k));
    const columns = new Set(fresh.map((k) => k.split("/")[0]));
    expect(columns.size).toBeLessThanOrEqual(1); // one newly exposed column
  });

  it("screen origins tile the canvas without seams", () => {
    const v = view({ zoom: 2 });
    const tiles = visibleTiles(meta, v);
    const scale = tileExtent(meta, 2) / groundPerPixel(meta, v.zoom);
    for (const t of tiles) {
      const o = tileScreenOrigin(meta, v, t);
      const right = tiles.find((u) => u.tx === t.tx + 1 && u.ty === t.ty);
      if (right) {
        const ro = tileScreenOrigin(meta, v, right);
        expect(ro.x - o.x).toBeCloseTo(scale, 6);
        expect(ro.y).toBeCloseTo(o.y, 6);
      }
    }
  });

  it("zoomAbout keeps the ground point under the cursor fixed", () => {
    const v = view({ zoom: 2 });
    const px = 123;
    const py = 456;
    const gpp = groundPerPixel(meta, v.zoom);
    const groundE = v.centerEast + (px - v.width / 2) * gpp;
    const groundN = v.centerNorth - (py - v.height / 2) * gpp;
    const zoomed = zoomAbout(meta, v, 4, px, py);
    const gpp2 = groundPerPixel(meta, zoomed.zoom);
    expect(zoomed.centerEast + (px - v.width / 2) * gpp2).toBeCloseTo(groundE, 9);
    expect(zoomed.centerNorth - (py - v.height / 2) * gpp2).toBeCloseTo(groundN, 9);
  });

  it("zoomAbout clamps to the service's zoom range", () => {
    const v = view({ zoom: 10 });
    expect(zoomAbout(meta, v, 99, 0, 0).zoom).toBe(10);
    expect(zoomAbout(meta, v, -3, 0, 0).zoom).toBe(0);
  });
});

describe("tile cache", () => {
  const img = {} as ImageBitmap;

  it("never replaces fresh tiles with stale generations", () => {
    const cache = new TileCache();
    cache.put({ z: 1, tx: 0, ty: 0 }, { image: img, generation: 5, coverage: 1 });
    cache.put({ z: 1, tx: 0, ty: 0 }, { image: img, generation: 3, coverage: 1 });
    expect(cache.get({ z: 1, tx: 0, ty: 0 })!.generation).toBe(5);
  });

  it("evicts oldest entries beyond capacity", () => {
    const cache = new TileCache(2);
    cache.put({ z: 1, tx: 0, ty: 0 }, { image: img, generation: 1, coverage: 1 });
    cache.put({ z: 1, tx: 1, ty: 0 }, { image: img, generation: 1, coverage: 1 });
    cache.put({ z: 1, tx: 2, ty: 0 }, { image: img, generation: 1, coverage: 1 });
    expect(cache.get({ z: 1, tx: 0, ty: 0 })).toBeUndefined();
    expect(cache.get({ z: 1, tx: 2, ty: 0 })).toBeDefined();
  });
});
