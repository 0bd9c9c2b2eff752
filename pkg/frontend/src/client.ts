import { SaveResult, SessionState, TreeDef } from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * HTTP client for the annotation service. Mutating calls are serialized
 * through a FIFO queue so at most one edit is in flight at a time and
 * keystrokes apply in press order.
 */
export class AnnotationClient {
  private tail: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = (await resp.json()) as T & { error?: string };
    if (!resp.ok) {
      throw new ApiError(resp.status, data.error ?? `HTTP ${resp.status}`);
    }
    return data;
  }

  private enqueue<T>(op: () => Promise<T>): Promise<T> {
    const run = () => op();
    const result = this.tail.then(run, run);
    this.tail = result.then(
      () => undefined,
      () => undefined,
    );
    return result;
  }

  /** Resolves once every queued mutation has settled. */
  idle(): Promise<void> {
    return this.tail.then(
      () => undefined,
      () => undefined,
    );
  }

  createSession(index?: number): Promise<SessionState> {
    const body = index === undefined ? {} : { index };
    return this.enqueue(() => this.request<SessionState>("POST", "/session", body));
  }

  state(sessionId: string): Promise<SessionState> {
    return this.request<SessionState>("GET", `/session/${sessionId}/state`);
  }

  tree(): Promise<TreeDef> {
    return this.request<TreeDef>("GET", "/skeleton/tree");
  }

  editBone(sessionId: string, boneIndex: number, dtheta: number, dphi: number): Promise<SessionState> {
    return this.enqueue(() =>
      this.request<SessionState>("POST", `/session/${sessionId}/bone`, {
        bone_index: boneIndex,
        dtheta,
        dphi,
      }),
    );
  }

  editGlobal(sessionId: string, axis: number, dangle: number): Promise<SessionState> {
    return this.enqueue(() =>
      this.request<SessionState>("POST", `/session/${sessionId}/global`, { axis, dangle }),
    );
  }

  undo(sessionId: string): Promise<SessionState> {
    return this.enqueue(() => this.request<SessionState>("POST", `/session/${sessionId}/undo`));
  }

  save(sessionId: string, path?: string): Promise<SaveResult> {
    const body = path === undefined ? {} : { path };
    return this.enqueue(() => this.request<SaveResult>("POST", `/session/${sessionId}/save`, body));
  }
}
