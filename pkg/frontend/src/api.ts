import type { ExportRequest, JobStatus, Metadata, Params, ServiceEvent } from "./types.js";

/** Thin typed client over the viewer service HTTP API. */
export class ServiceClient {
  constructor(private base: string = "") {}

  async metadata(): Promise<Metadata> {
    const r = await fetch(`${this.base}/api/metadata`);
    if (!r.ok) throw new Error(`metadata failed: ${r.status}`);
    return r.json();
  }

  /** Returns the accepted params and new generation, or throws with the
   * service's message so the caller can revert the control. */
  async setParams(update: Partial<Params>): Promise<{ generation: number; params: Params }> {
    const r = await fetch(`${this.base}/api/params`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(update),
    });
    if (!r.ok) {
      const detail = await r.json().catch(() => ({ detail: r.statusText }));
      throw new Error(detail.detail ?? `params rejected: ${r.status}`);
    }
    return r.json();
  }

  tileUrl(z: number, tx: number, ty: number, generation: number): string {
    return `${this.base}/api/tile/${z}/${tx}/${ty}?gen=${generation}`;
  }

  async histogram(viewport: string): Promise<{
    bins: number[][];
    range: [number, number] | null;
    count: number;
    bounds?: { low: number[]; high: number[] } | null;
  }> {
    const r = await fetch(`${this.base}/api/histogram?viewport=${viewport}`);
    if (!r.ok) throw new Error(`histogram failed: ${r.status}`);
    return r.json();
  }

  async startExport(req: ExportRequest): Promise<{ id: string }> {
    const r = await fetch(`${this.base}/api/export`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!r.ok) {
      const detail = await r.json().catch(() => ({ detail: r.statusText }));
      throw new Error(detail.detail ?? `export rejected: ${r.status}`);
    }
    return r.json();
  }

  async exportStatus(id: string): Promise<JobStatus> {
    const r = await fetch(`${this.base}/api/export/${id}`);
    if (!r.ok) throw new Error(`job ${id} lookup failed: ${r.status}`);
    return r.json();
  }

  /** Subscribe to the event stream; returns an unsubscribe function. */
  events(onEvent: (e: ServiceEvent) => void): () => void {
    let source = new EventSource(`${this.base}/api/events`);
    let closed = false;
    const attach = (es: EventSource) => {
      es.onmessage = (m) => onEvent(JSON.parse(m.data));
      es.onerror = () => {
        es.close();
        if (!closed) {
          setTimeout(() => {
            source = new EventSource(`${this.base}/api/events`);
            attach(source);
          }, 1500);
        }
      };
    };
    attach(source);
    return () => {
      closed = true;
      source.close();
    };
  }
}
