// Typed client for the solve service. No numerics here: everything the UI
// shows comes back from these endpoints.

export interface SolveRequest {
  g: string;
  n: string;
  T: number;
  delta: number;
  h: number;
  x_max: number;
}

export interface FieldError {
  field: string;
  message: string;
  offset?: number;
}

export interface MeshInfo {
  delta: number;
  x_min: number;
  x_max: number;
}

export interface Atom {
  x: number;
  mass: number;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "running" | "done" | "failed";
  mesh?: MeshInfo;
  atoms?: Atom[];
  mass_captured?: number;
  wall_time?: number;
  error?: string;
}

export interface GridDoc {
  mesh: MeshInfo;
  values: number[];
  atoms: Atom[];
}

export interface DensityDoc extends GridDoc {
  delta1: number;
  clamped_mass: number;
}

export interface CdfPoint {
  x: number;
  F: number;
  truncated: boolean;
}

export interface QuantilePoint {
  p: number;
  x: number;
  truncated: boolean;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public fieldErrors: FieldError[] = [],
    public margin?: number,
  ) {
    super(message);
  }
}

async function raise(res: Response): Promise<never> {
  let body: any = null;
  try {
    body = await res.json();
  } catch {
    // non-JSON error body; fall through with the status line only
  }
  if (body && Array.isArray(body.errors)) {
    const first = body.errors[0];
    throw new ApiError(res.status, `${first.field}: ${first.message}`, body.errors);
  }
  if (body && body.detail) {
    throw new ApiError(res.status, body.detail, [], body.margin);
  }
  throw new ApiError(res.status, `request failed with status ${res.status}`);
}

export class Client {
  constructor(
    private base: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.base + path);
    if (!res.ok) await raise(res);
    return (await res.json()) as T;
  }

  async submit(req: SolveRequest): Promise<string> {
    const res = await this.fetchImpl(this.base + "/solve", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) await raise(res);
    const body = (await res.json()) as { job_id: string };
    return body.job_id;
  }

  status(id: string): Promise<JobStatus> {
    return this.getJson(`/jobs/${id}`);
  }

  grid(id: string): Promise<GridDoc> {
    return this.getJson(`/jobs/${id}/grid`);
  }

  // raw bytes so an export is exactly what the service sent
  async csv(id: string): Promise<Uint8Array> {
    const res = await this.fetchImpl(`${this.base}/jobs/${id}/csv`);
    if (!res.ok) await raise(res);
    return new Uint8Array(await res.arrayBuffer());
  }

  cdf(id: string, x: number): Promise<CdfPoint> {
    return this.getJson(`/jobs/${id}/cdf?x=${encodeURIComponent(x)}`);
  }

  quantile(id: string, p: number): Promise<QuantilePoint> {
    return this.getJson(`/jobs/${id}/quantile?p=${encodeURIComponent(p)}`);
  }

  density(id: string, window?: number, delta1?: number): Promise<DensityDoc> {
    const params = new URLSearchParams();
    if (window !== undefined) params.set("window", String(window));
    if (delta1 !== undefined) params.set("delta1", String(delta1));
    const qs = params.toString();
    return this.getJson(`/jobs/${id}/density${qs ? "?" + qs : ""}`);
  }
}
