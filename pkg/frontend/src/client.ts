// HTTP session against the simulation service. Plain text in, plain text
// out; callers get {ok, status, text} and decide what to surface.

export interface ApiReply {
  ok: boolean;
  status: number;
  text: string;
}

export class PanelSession {
  readonly baseUrl: string;
  lastContact = 0;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request(path: string, body?: string): Promise<ApiReply> {
    const resp = await fetch(this.baseUrl + path, body === undefined
      ? { method: "GET" }
      : { method: "POST", body, headers: { "Content-Type": "text/plain" } });
    const text = await resp.text();
    this.lastContact = Date.now();
    return { ok: resp.ok, status: resp.status, text };
  }

  fetchState(): Promise<ApiReply> {
    return this.request("/state");
  }

  fetchEvents(since: number): Promise<ApiReply> {
    return this.request(`/events?since=${since}`);
  }

  fetchActions(): Promise<ApiReply> {
    return this.request("/actions");
  }

  addPlate(): Promise<ApiReply> {
    return this.request("/plates", "");
  }

  inject(target: string, exception: string, atTick?: number): Promise<ApiReply> {
    const at = atTick === undefined ? 0 : atTick;
    const line = `at=${at} kind=inject target=${target} exception=${exception}`;
    return this.request("/faults", line + "\n");
  }

  crash(target: string, atTick?: number): Promise<ApiReply> {
    const at = atTick === undefined ? 0 : atTick;
    return this.request("/faults", `at=${at} kind=crash target=${target}\n`);
  }

  control(cmd: "pause" | "resume" | "step" | "reset", n?: number): Promise<ApiReply> {
    const body = n === undefined ? `cmd=${cmd}` : `cmd=${cmd} n=${n}`;
    return this.request("/control", body);
  }
}

export function connect(baseUrl: string): PanelSession {
  return new PanelSession(baseUrl);
}
