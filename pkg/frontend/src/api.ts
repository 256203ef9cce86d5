/** Typed client for the inference service HTTP API. */

export interface HealthInfo {
  status: "ok" | "loading";
  model_id: string | null;
  kernel_backend: string;
  tasks_loaded: number;
}

export interface TaskInfo {
  id: string;
  family: string;
  variant: string;
  dataset: string;
  seen: boolean;
  metric: string;
}

export interface SampleInfo {
  id: string;
  thumbnail: string;
  has_fg: boolean;
  vendor: string | null;
  image: string;
  labels?: string;
}

export interface SampleListing {
  dataset: string;
  split: string;
  samples: SampleInfo[];
}

/** One palette entry on the wire: [class id, r, g, b] with 8-bit channels. */
export type PaletteEntry = [number, number, number, number];

export interface ContextPair {
  input: string;
  output: string;
}

export interface InferRequest {
  context: ContextPair[];
  query: string;
  decode?: boolean;
  palette?: PaletteEntry[];
}

export interface InferResponse {
  prediction: string;
  model_id: string;
  latency_ms: number;
  labelmap?: string;
  palette?: PaletteEntry[];
  snap_distance_mean?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

function detailText(body: unknown): string {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return detail;
    return JSON.stringify(detail);
  }
  return JSON.stringify(body);
}

async function asJson<T>(resp: Response): Promise<T> {
  let body: unknown;
  try {
    body = await resp.json();
  } catch {
    body = null;
  }
  if (!resp.ok) {
    throw new ApiError(resp.status, body === null ? resp.statusText : detailText(body));
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  health(): Promise<HealthInfo> {
    return fetch(`${this.base}/api/health`).then((r) => asJson<HealthInfo>(r));
  }

  tasks(): Promise<TaskInfo[]> {
    return fetch(`${this.base}/api/tasks`)
      .then((r) => asJson<{ tasks: TaskInfo[] }>(r))
      .then((body) => body.tasks);
  }

  samples(dataset: string, split = "train", limit = 24): Promise<SampleListing> {
    const params = new URLSearchParams({ dataset, split, limit: String(limit) });
    return fetch(`${this.base}/api/samples?${params}`).then((r) => asJson<SampleListing>(r));
  }

  infer(request: InferRequest): Promise<InferResponse> {
    return fetch(`${this.base}/api/infer`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    }).then((r) => asJson<InferResponse>(r));
  }
}

/** Human-readable message for a failed call, including the server code. */
export function errorMessage(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return `service unreachable: ${err.message}`;
  return String(err);
}
