import type { ServiceClient } from "./api.js";
import type { Metadata } from "./types.js";
import {
  TileCache,
  type TileKey,
  type ViewportState,
  groundPerPixel,
  keyString,
  tileScreenOrigin,
  visibleTiles,
  zoomAbout,
} from "./tiles.js";

const RETRY_BASE_MS = 600;

/** Pan/zoom tile canvas. Fresh-generation tiles draw at full strength;
 * tiles from an older generation stay visible but dimmed until replaced,
 * so parameter changes never blank the map. */
export class Viewer {
  view: ViewportState;
  generation = 0;
  private cache = new TileCache();
  private inflight = new Map<string, number>(); // key -> generation being fetched
  private retryAt = new Map<string, number>();
  private raf = 0;
  private settleTimer = 0;
  onSettled: (() => void) | null = null;

  constructor(
    private canvas: HTMLCanvasElement,
    private client: ServiceClient,
    private meta: Metadata,
  ) {
    const b = meta.bounds;
    this.view = {
      centerNorth: (b.north_min + b.north_max) / 2,
      centerEast: (b.east_min + b.east_max) / 2,
      zoom: 2,
      width: canvas.width,
      height: canvas.height,
    };
    this.generation = meta.generation;
    this.bindInput();
  }

  setGeneration(gen: number): void {
    if (gen !== this.generation) {
      this.generation = gen;
      this.scheduleDraw();
    }
  }

  /** Content changed server-side (band finished loading): refetch what we
   * can see, keep showing the old pixels meanwhile. */
  contentChanged(): void {
    this.inflight.clear();
    this.retryAt.clear();
    for (const key of visibleTiles(this.meta, this.view)) {
      this.fetchTile(key, true);
    }
    this.scheduleDraw();
  }

  private bindInput(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("pointerdown", (e) => {
      dragging = true;
      lastX = e.offsetX;
      lastY = e.offsetY;
      this.canvas.setPointerCapture(e.pointerId);
    });
    this.canvas.addEventListener("pointermove", (e) => {
      if (!dragging) return;
      const gpp = groundPerPixel(this.meta, this.view.zoom);
      this.view.centerEast -= (e.offsetX - lastX) * gpp;
      this.view.centerNorth += (e.offsetY - lastY) * gpp;
      lastX = e.offsetX;
      lastY = e.offsetY;
      this.scheduleDraw();
    });
    this.canvas.addEventListener("pointerup", () => {
      dragging = false;
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      const dz = e.deltaY < 0 ? 1 : -1;
      this.view = zoomAbout(this.meta, this.view, this.view.zoom + dz, e.offsetX, e.offsetY);
      this.scheduleDraw();
    });
  }

  scheduleDraw(): void {
    if (!this.raf) {
      this.raf = requestAnimationFrame(() => {
        this.raf = 0;
        this.draw();
      });
    }
    clearTimeout(this.settleTimer);
    this.settleTimer = window.setTimeout(() => this.onSettled?.(), 350);
  }

  viewportQuery(): string {
    const gpp = groundPerPixel(this.meta, this.view.zoom);
    return [
      this.view.centerNorth,
      this.view.centerEast,
      this.view.height * gpp,
      this.view.width * gpp,
    ].join(",");
  }

  private fetchTile(key: TileKey, force = false): void {
    const ks = keyString(key);
    const cached = this.cache.get(key);
    if (!force && cached && cached.generation === this.generation) return;
    if (this.inflight.get(ks) === this.generation) return;
    const retry = this.retryAt.get(ks);
    if (retry !== undefined && performance.now() < retry) return;

    const gen = this.generation;
    this.inflight.set(ks, gen);
    fetch(this.client.tileUrl(key.z, key.tx, key.ty, gen))
      .then(async (r) => {
        if (r.status === 409) return; // superseded; a fresh pass will refetch
        if (!r.ok) throw new Error(`tile ${ks}: ${r.status}`);
        const coverage = parseFloat(r.headers.get("X-Coverage") ?? "0");
        const blob = await r.blob();
        const image = await createImageBitmap(blob);
        this.cache.put(key, { image, generation: gen, coverage });
        this.retryAt.delete(ks);
        this.scheduleDraw();
      })
      .catch(() => {
        // placeholder stays; retry with backoff
        const prev = this.retryAt.get(ks);
        const delay = prev === undefined ? RETRY_BASE_MS : RETRY_BASE_MS * 4;
        this.retryAt.set(ks, performance.now() + delay);
      })
      .finally(() => {
        if (this.inflight.get(ks) === gen) this.inflight.delete(ks);
      });
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.fillStyle = "#181b20";
    ctx.fillRect(0, 0, this.view.width, this.view.height);
    const size = this.meta.tile_size;
    for (const key of visibleTiles(this.meta, this.view)) {
      const { x, y } = tileScreenOrigin(this.meta, this.view, key);
      const cached = this.cache.get(key);
      if (cached) {
        ctx.globalAlpha = cached.generation === this.generation ? 1.0 : 0.5;
        ctx.drawImage(cached.image, Math.round(x), Math.round(y), size, size);
        ctx.globalAlpha = 1.0;
      } else {
        ctx.strokeStyle = "#2a2f36";
        ctx.strokeRect(Math.round(x) + 0.5, Math.round(y) + 0.5, size - 1, size - 1);
      }
      if (!cached || cached.generation !== this.generation) {
        this.fetchTile(key);
      }
    }
  }
}
