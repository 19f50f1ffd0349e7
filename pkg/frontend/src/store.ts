import type { Metadata, Params, ServiceEvent } from "./types.js";

/** The slice of the service API the store drives (injectable for tests). */
export interface ParamsService {
  setParams(update: Partial<Params>): Promise<{ generation: number; params: Params }>;
  metadata(): Promise<Metadata>;
}

export interface ControlState extends Params {
  generation: number;
}

export type StoreListener = (state: ControlState, error: string | null) => void;

/** Holds the control state, pushes changes to the service, and reconciles
 * with what the service acknowledged. A rejected change reverts the
 * controls and surfaces the service's message; the UI therefore always
 * converges to the service's session state. */
export class ControlStore {
  private state: ControlState;
  private listeners: StoreListener[] = [];
  private pending = Promise.resolve();

  constructor(private service: ParamsService, meta: Metadata) {
    this.state = { ...meta.params, generation: meta.generation };
  }

  get current(): ControlState {
    return {
      ...this.state,
      wavelengths: [...this.state.wavelengths],
      cube_range: this.state.cube_range ? [...this.state.cube_range] : null,
    };
  }

  subscribe(fn: StoreListener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(error: string | null = null): void {
    for (const fn of this.listeners) fn(this.current, error);
  }

  /** Apply a partial change: optimistic locally, authoritative on ack.
   * Changes queue so rapid slider drags stay ordered. */
  apply(update: Partial<Params>): Promise<void> {
    const run = async () => {
      const before = this.current;
      this.state = { ...this.state, ...update } as ControlState;
      this.emit();
      try {
        const ack = await this.service.setParams(update);
        this.state = { ...ack.params, generation: ack.generation };
        this.emit();
      } catch (e) {
        this.state = before; // revert with message
        this.emit(e instanceof Error ? e.message : String(e));
      }
    };
    this.pending = this.pending.then(run);
    return this.pending;
  }

  /** Event-stream reconciliation: another client (or the service itself)
   * moved the session; adopt its state. */
  async onEvent(event: ServiceEvent): Promise<void> {
    if (event.type === "params" && event.generation !== this.state.generation) {
      const meta = await this.service.metadata();
      this.state = { ...meta.params, generation: meta.generation };
      this.emit();
    }
  }
}
