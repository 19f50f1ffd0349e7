import type { Metadata } from "./types.js";

/** Mirrors the service's square tile pyramid: the root tile is the square
 * envelope of the collection bounds anchored at its top-left corner, and
 * tile ground extent halves per zoom level. */

export interface ViewportState {
  centerNorth: number;
  centerEast: number;
  zoom: number;
  width: number;
  height: number;
}

export interface TileKey {
  z: number;
  tx: number;
  ty: number;
}

export function tileExtent(meta: Metadata, z: number): number {
  return meta.root_side / (1 << z);
}

/** Ground meters per screen pixel at a zoom level. */
export function groundPerPixel(meta: Metadata, z: number): number {
  return tileExtent(meta, z) / meta.tile_size;
}

export function anchor(meta: Metadata): { north: number; east: number } {
  return { north: meta.bounds.north_max, east: meta.bounds.east_min };
}

/** Exactly the tiles whose ground squares intersect the viewport. */
export function visibleTiles(meta: Metadata, view: ViewportState): TileKey[] {
  const a = anchor(meta);
  const extent = tileExtent(meta, view.zoom);
  const gpp = groundPerPixel(meta, view.zoom);
  const west = view.centerEast - (view.width / 2) * gpp;
  const east = view.centerEast + (view.width / 2) * gpp;
  const north = view.centerNorth + (view.height / 2) * gpp;
  const south = view.centerNorth - (view.height / 2) * gpp;

  const n = 1 << view.zoom;
  const txLo = Math.max(Math.floor((west - a.east) / extent), 0);
  const txHi = Math.min(Math.ceil((east - a.east) / extent), n);
  const tyLo = Math.max(Math.floor((a.north - north) / extent), 0);
  const tyHi = Math.min(Math.ceil((a.north - south) / extent), n);

  const out: TileKey[] = [];
  for (let ty = tyLo; ty < tyHi; ty++) {
    for (let tx = txLo; tx < txHi; tx++) {
      out.push({ z: view.zoom, tx, ty });
    }
  }
  return out;
}

/** Screen position of a tile's top-left corner for the given viewport. */
export function tileScreenOrigin(
  meta: Metadata,
  view: ViewportState,
  key: TileKey,
): { x: number; y: number } {
  const a = anchor(meta);
  const extent = tileExtent(meta, key.z);
  const gpp = groundPerPixel(meta, view.zoom);
  const west = view.centerEast - (view.width / 2) * gpp;
  const top = view.centerNorth + (view.height / 2) * gpp;
  return {
    x: (a.east + key.tx * extent - west) / gpp,
    y: (top - (a.north - key.ty * extent)) / gpp,
  };
}

/** Move the viewport so the ground point under a screen pixel stays put
 * while the zoom level changes. */
export function zoomAbout(
  meta: Metadata,
  view: ViewportState,
  newZoom: number,
  px: number,
  py: number,
): ViewportState {
  const z = Math.max(0, Math.min(newZoom, meta.max_zoom));
  const gppOld = groundPerPixel(meta, view.zoom);
  const gppNew = groundPerPixel(meta, z);
  const groundE = view.centerEast + (px - view.width / 2) * gppOld;
  const groundN = view.centerNorth - (py - view.height / 2) * gppOld;
  return {
    ...view,
    zoom: z,
    centerEast: groundE - (px - view.width / 2) * gppNew,
    centerNorth: groundN + (py - view.height / 2) * gppNew,
  };
}

export function keyString(key: TileKey): string {
  return `${key.z}/${key.tx}/${key.ty}`;
}

export interface CachedTile {
  image: ImageBitmap | HTMLImageElement;
  generation: number;
  coverage: number;
}

/** Tile image cache. Tiles from older generations stay available so the
 * viewer can keep showing them dimmed until fresh ones arrive. */
export class TileCache {
  private tiles = new Map<string, CachedTile>();
  private order: string[] = [];

  constructor(private capacity = 512) {}

  get(key: TileKey): CachedTile | undefined {
    return this.tiles.get(keyString(key));
  }

  put(key: TileKey, tile: CachedTile): void {
    const k = keyString(key);
    const existing = this.tiles.get(k);
    if (existing && existing.generation > tile.generation) {
      return; // never replace fresh content with stale
    }
    if (!this.tiles.has(k)) {
      this.order.push(k);
      while (this.order.length > this.capacity) {
        const evict = this.order.shift()!;
        this.tiles.delete(evict);
      }
    }
    this.tiles.set(k, tile);
  }

  /** Drop tiles whose content can no longer be current (e.g. after a band
   * finishes loading); dimmable stale-generation tiles survive parameter
   * changes, so this is only for content invalidation. */
  clear(): void {
    this.tiles.clear();
    this.order = [];
  }
}
