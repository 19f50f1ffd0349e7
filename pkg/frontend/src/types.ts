export interface Bounds {
  north_min: number;
  north_max: number;
  east_min: number;
  east_max: number;
}

export interface CubeInfo {
  name: string;
  samples: number;
  lines: number;
  bands: number;
  status: "not-loaded" | "loading" | "ready";
}

export interface Params {
  wavelengths: number[];
  mode: string;
  stretch: string;
  cube_range: [number, number] | null;
  ground_height: number;
}

export interface Metadata {
  bounds: Bounds;
  cubes: CubeInfo[];
  wavelengths: number[];
  ground_height: number;
  ground_estimated: boolean;
  tile_size: number;
  max_zoom: number;
  root_side: number;
  generation: number;
  params: Params;
}

export interface ExportRequest {
  wavelengths: number[] | "all";
  gsd: number;
  output: string;
  mode?: string;
}

export interface JobStatus {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  output: string | null;
  error: string | null;
}

export type ServiceEvent =
  | { type: "hello"; generation: number }
  | { type: "params"; generation: number }
  | { type: "band-status"; cube: number; band: number; status: string }
  | { type: "job"; id: string; status: string; progress: number; output?: string; error?: string };
