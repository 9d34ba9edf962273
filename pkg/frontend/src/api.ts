// HTTP client for the engine. The console never decides workflow legality
// itself: every mutation goes to the server and its verdict is final.

import type {
  AgentRef,
  ApiError,
  ChangeSet,
  EventDoc,
  ItemDoc,
  JobsResponse,
  OutcomeDoc,
} from "./types.js";

export class RequestFailed extends Error {
  constructor(
    public status: number,
    public body: ApiError,
  ) {
    super(`${body.error}: ${body.message}`);
  }
}

export class Session {
  private agent: AgentRef | null = null;

  constructor(
    public baseUrl: string,
    public token: string,
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new RequestFailed(response.status, payload as ApiError);
    }
    return payload as T;
  }

  /** Resolve the token into an AgentRef and cache it for the session. */
  async login(): Promise<AgentRef> {
    this.agent = await this.request<AgentRef>("GET", "/agents/me");
    return this.agent;
  }

  get agentRef(): AgentRef {
    if (!this.agent) throw new Error("not logged in");
    return this.agent;
  }

  async jobs(cursor?: number, waitSeconds?: number): Promise<JobsResponse> {
    const params = new URLSearchParams();
    if (cursor !== undefined) params.set("cursor", String(cursor));
    if (waitSeconds !== undefined) params.set("wait", String(waitSeconds));
    const query = params.toString() ? `?${params}` : "";
    return this.request("GET", `/agents/${this.agentRef.agentItemId}/jobs${query}`);
  }

  async item(itemId: string): Promise<ItemDoc> {
    return this.request("GET", `/items/${itemId}`);
  }

  async history(itemId: string): Promise<EventDoc[]> {
    const response = await this.request<{ events: EventDoc[] }>(
      "GET",
      `/items/${itemId}/history`,
    );
    return response.events;
  }

  async lineage(itemId: string): Promise<Record<string, unknown>[]> {
    const response = await this.request<{ chain: Record<string, unknown>[] }>(
      "GET",
      `/items/${itemId}/lineage`,
    );
    return response.chain;
  }

  async diff(descId: string, v1: number, v2: number): Promise<ChangeSet> {
    return this.request("GET", `/descriptions/${descId}/diff?v1=${v1}&v2=${v2}`);
  }

  async executeJob(
    itemId: string,
    stepPath: string,
    transition: string,
    outcome?: OutcomeDoc,
    purpose?: string,
  ): Promise<{ events: EventDoc[] }> {
    return this.request("POST", `/items/${itemId}/jobs/execute`, {
      stepPath,
      transition,
      outcome,
      purpose: purpose ?? "",
    });
  }

  async editWorkflow(
    itemId: string,
    patch: Record<string, unknown>,
    purpose?: string,
  ): Promise<{ event: EventDoc }> {
    return this.request("POST", `/items/${itemId}/workflow/edit`, {
      patch,
      purpose: purpose ?? "",
    });
  }
}

const TOKEN_KEY = "itemforge.token";

/** The token is the only console state that outlives a reload. */
export function saveToken(token: string): void {
  window.localStorage.setItem(TOKEN_KEY, token);
}

export function storedToken(): string | null {
  return window.localStorage.getItem(TOKEN_KEY);
}

export function clearToken(): void {
  window.localStorage.removeItem(TOKEN_KEY);
}
