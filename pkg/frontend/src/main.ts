import { ServiceClient } from "./api.js";
import { ControlStore } from "./store.js";
import { Viewer } from "./viewer.js";
import type { JobStatus, Metadata, ServiceEvent } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function wavelengthSelect(id: string, meta: Metadata, value: number): HTMLSelectElement {
  const select = el<HTMLSelectElement>(id);
  select.replaceChildren(
    ...meta.wavelengths.map((w) => {
      const opt = document.createElement("option");
      opt.value = String(w);
      opt.textContent = `${w.toFixed(1)} nm`;
      return opt;
    }),
  );
  select.value = String(
    meta.wavelengths.reduce((a, b) => (Math.abs(b - value) < Math.abs(a - value) ? b : a)),
  );
  return select;
}

async function start(): Promise<void> {
  const client = new ServiceClient();
  const meta = await client.metadata();
  const canvas = el<HTMLCanvasElement>("map");
  const viewer = new Viewer(canvas, client, meta);
  const store = new ControlStore(client, meta);
  const message = el<HTMLDivElement>("message");

  const selects = ["wl-r", "wl-g", "wl-b"].map((id, i) =>
    wavelengthSelect(id, meta, meta.params.wavelengths[i] ?? meta.params.wavelengths[0]),
  );
  const mode = el<HTMLSelectElement>("mode");
  const stretch = el<HTMLSelectElement>("stretch");
  const rangeLo = el<HTMLInputElement>("range-lo");
  const rangeHi = el<HTMLInputElement>("range-hi");
  const ground = el<HTMLInputElement>("ground");
  const cubeStatus = el<HTMLDivElement>("cube-status");

  rangeLo.max = rangeHi.max = String(meta.cubes.length - 1);
  rangeHi.value = String(meta.cubes.length - 1);
  ground.value = meta.ground_height.toFixed(2);

  const syncControls = () => {
    const s = store.current;
    s.wavelengths.forEach((w, i) => {
      if (selects[i]) selects[i].value = String(w);
    });
    mode.value = s.mode;
    stretch.value = s.stretch;
    const [lo, hi] = s.cube_range ?? [0, meta.cubes.length - 1];
    rangeLo.value = String(lo);
    rangeHi.value = String(hi);
    ground.value = s.ground_height.toFixed(2);
    el<HTMLSpanElement>("range-label").textContent = `${lo}–${hi}`;
  };

  store.subscribe((state, error) => {
    syncControls();
    viewer.setGeneration(state.generation);
    message.textContent = error ?? "";
    message.classList.toggle("error", error !== null);
  });
  syncControls();

  const pushWavelengths = () =>
    store.apply({ wavelengths: selects.map((s) => parseFloat(s.value)) });
  selects.forEach((s) => s.addEventListener("change", pushWavelengths));
  mode.addEventListener("change", () => store.apply({ mode: mode.value }));
  stretch.addEventListener("change", () => store.apply({ stretch: stretch.value }));
  const pushRange = () => {
    const lo = Math.min(parseInt(rangeLo.value), parseInt(rangeHi.value));
    const hi = Math.max(parseInt(rangeLo.value), parseInt(rangeHi.value));
    store.apply({ cube_range: [lo, hi] });
  };
  rangeLo.addEventListener("change", pushRange);
  rangeHi.addEventListener("change", pushRange);
  ground.addEventListener("change", () =>
    store.apply({ ground_height: parseFloat(ground.value) }),
  );

  // histogram-driven stretch recomputes when the viewport settles
  viewer.onSettled = async () => {
    if (store.current.stretch === "none") return;
    try {
      const h = await client.histogram(viewer.viewportQuery());
      if (h.count > 0) viewer.contentChanged(); // bounds moved: refresh tiles
      drawHistogram(h.bins);
    } catch {
      /* viewport may be empty; keep the last histogram */
    }
  };

  const histCanvas = el<HTMLCanvasElement>("histogram");
  function drawHistogram(bins: number[][]): void {
    const ctx = histCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, histCanvas.width, histCanvas.height);
    const colors = ["#e06a6a", "#6ade6a", "#6a8ae0"];
    const peak = Math.max(1, ...bins.flat());
    bins.forEach((channel, c) => {
      ctx.strokeStyle = colors[c] ?? "#999";
      ctx.beginPath();
      channel.forEach((count, i) => {
        const x = (i / channel.length) * histCanvas.width;
        const y = histCanvas.height * (1 - count / peak);
        i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
      });
      ctx.stroke();
    });
  }

  function refreshCubeStatus(cubes: Metadata["cubes"]): void {
    cubeStatus.replaceChildren(
      ...cubes.map((c) => {
        const chip = document.createElement("span");
        chip.className = `chip ${c.status}`;
        chip.title = `${c.name}: ${c.status}`;
        return chip;
      }),
    );
  }
  refreshCubeStatus(meta.cubes);

  // export form
  const exportStatus = el<HTMLDivElement>("export-status");
  el<HTMLFormElement>("export-form").addEventListener("submit", async (e) => {
    e.preventDefault();
    const gsd = parseFloat(el<HTMLInputElement>("export-gsd").value);
    const output = el<HTMLInputElement>("export-output").value.trim();
    const wls = el<HTMLInputElement>("export-wavelengths").value.trim();
    if (!(gsd > 0)) {
      exportStatus.textContent = "GSD must be a positive number";
      return;
    }
    if (!output) {
      exportStatus.textContent = "output path required";
      return;
    }
    try {
      const { id } = await client.startExport({
        gsd,
        output,
        wavelengths: wls === "all" || wls === "" ? "all" : wls.split(",").map(Number),
        mode: store.current.mode === "raw" ? "raw" : store.current.mode,
      });
      exportStatus.textContent = `job ${id} queued`;
    } catch (err) {
      exportStatus.textContent = err instanceof Error ? err.message : String(err);
    }
  });

  client.events(async (event: ServiceEvent) => {
    await store.onEvent(event);
    if (event.type === "band-status") {
      const fresh = await client.metadata();
      refreshCubeStatus(fresh.cubes);
      if (event.status === "ready") viewer.contentChanged();
    } else if (event.type === "job") {
      const j = event as unknown as JobStatus;
      exportStatus.textContent =
        j.status === "done"
          ? `job ${event.id} done: ${event.output}`
          : j.status === "failed"
            ? `job ${event.id} failed: ${event.error}`
            : `job ${event.id} ${j.status} ${(event.progress * 100).toFixed(0)}%`;
    }
  });

  viewer.scheduleDraw();
}

start().catch((e) => {
  document.body.textContent = `viewer failed to start: ${e}`;
});
