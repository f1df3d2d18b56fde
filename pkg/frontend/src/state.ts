// Session state: one active job at a time. Poll responses for superseded
// jobs are discarded by id so a late answer can never clobber a newer solve.

import {
  ApiError,
  Client,
  DensityDoc,
  GridDoc,
  JobStatus,
  SolveRequest,
} from "./api.js";

export interface FormValues {
  g: string;
  n: string;
  T: string;
  delta: string;
  h: string;
  x_max: string;
}

export interface FormProblem {
  field: string;
  message: string;
}

const NUMERIC_FIELDS = ["T", "delta", "h", "x_max"] as const;

export function validateForm(values: FormValues): {
  request?: SolveRequest;
  problems: FormProblem[];
} {
  const problems: FormProblem[] = [];
  for (const field of ["g", "n"] as const) {
    if (!values[field].trim()) {
      problems.push({ field, message: "enter an expression in s" });
    }
  }
  const numbers: Partial<Record<(typeof NUMERIC_FIELDS)[number], number>> = {};
  for (const field of NUMERIC_FIELDS) {
    const parsed = Number(values[field]);
    if (!values[field].trim() || !Number.isFinite(parsed)) {
      problems.push({ field, message: "enter a number" });
    } else if (parsed <= 0) {
      problems.push({ field, message: "must be positive" });
    } else {
      numbers[field] = parsed;
    }
  }
  if (problems.length) return { problems };
  return {
    problems: [],
    request: {
      g: values.g.trim(),
      n: values.n.trim(),
      T: numbers.T!,
      delta: numbers.delta!,
      h: numbers.h!,
      x_max: numbers.x_max!,
    },
  };
}

// public surface of Client, so fakes can stand in
export type ServiceClient = Pick<
  Client,
  "submit" | "status" | "grid" | "csv" | "cdf" | "quantile" | "density"
>;

export interface SessionEvents {
  onStatus?: (text: string) => void;
  onGrid?: (grid: GridDoc, status: JobStatus) => void;
  onDensity?: (density: DensityDoc) => void;
  onError?: (text: string) => void;
}

const POLL_START_MS = 250;
const POLL_CAP_MS = 2000;

const delay = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class Session {
  activeJob: string | null = null;
  grid: GridDoc | null = null;
  density: DensityDoc | null = null;

  constructor(
    private client: ServiceClient,
    private events: SessionEvents = {},
    private sleep: (ms: number) => Promise<void> = delay,
  ) {}

  private fail(err: unknown): void {
    const text =
      err instanceof ApiError && err.margin !== undefined
        ? `${err.message} (margin ${err.margin})`
        : err instanceof Error
          ? err.message
          : String(err);
    this.events.onError?.(text);
  }

  async compute(req: SolveRequest): Promise<void> {
    let id: string;
    try {
      id = await this.client.submit(req);
    } catch (err) {
      this.fail(err);
      return;
    }
    this.activeJob = id;
    this.grid = null;
    this.density = null;
    this.events.onStatus?.("queued");

    let wait = POLL_START_MS;
    let status: JobStatus;
    for (;;) {
      await this.sleep(wait);
      if (this.activeJob !== id) return; // superseded while waiting
      try {
        status = await this.client.status(id);
      } catch (err) {
        this.fail(err);
        return;
      }
      if (this.activeJob !== id) return; // answer arrived for a stale job
      if (status.status === "done") break;
      if (status.status === "failed") {
        this.events.onError?.(status.error ?? "solve failed");
        return;
      }
      this.events.onStatus?.(status.status);
      wait = Math.min(wait * 1.5, POLL_CAP_MS);
    }

    try {
      const grid = await this.client.grid(id);
      if (this.activeJob !== id) return;
      this.grid = grid;
      this.events.onGrid?.(grid, status);
      await this.refreshDensity();
    } catch (err) {
      this.fail(err);
    }
  }

  // smoothing slider path: re-fetches, never re-solves
  async refreshDensity(window?: number): Promise<void> {
    const id = this.activeJob;
    if (!id || !this.grid) return;
    try {
      const density = await this.client.density(id, window);
      if (this.activeJob !== id) return;
      this.density = density;
      this.events.onDensity?.(density);
    } catch (err) {
      this.fail(err);
    }
  }

  async query(x: number) {
    if (!this.activeJob) return null;
    return this.client.cdf(this.activeJob, x);
  }

  async inverseQuery(p: number) {
    if (!this.activeJob) return null;
    return this.client.quantile(this.activeJob, p);
  }

  async exportCsvBytes(): Promise<Uint8Array | null> {
    if (!this.activeJob || !this.grid) return null;
    return this.client.csv(this.activeJob);
  }
}
