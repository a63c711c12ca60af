// Thin client over the gateway HTTP API. Every mutating view action maps to
// exactly one POST here; the UI only flips after the confirming events
// arrive on the stream (no optimistic state).

export interface ApiResponse<T = Record<string, unknown>> {
  status: number;
  body: T;
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; json(): Promise<unknown> }>;

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private async post(path: string, body: unknown): Promise<ApiResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return { status: resp.status, body: (await resp.json()) as Record<string, unknown> };
  }

  private async get(path: string): Promise<ApiResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`);
    return { status: resp.status, body: (await resp.json()) as Record<string, unknown> };
  }

  submitIntent(text: string): Promise<ApiResponse> {
    return this.post("/intents", { text });
  }

  decideEscalation(id: string, decision: string, suspendId?: string): Promise<ApiResponse> {
    const body: Record<string, unknown> = { decision };
    if (suspendId) body.suspend_id = suspendId;
    return this.post(`/escalations/${id}`, body);
  }

  decidePlan(planId: string, decision: "Approve" | "Reject"): Promise<ApiResponse> {
    return this.post(`/plans/${planId}/decision`, { decision });
  }

  status(): Promise<ApiResponse> {
    return this.get("/status");
  }

  tick(count = 1): Promise<ApiResponse> {
    return this.post("/tick", { count });
  }
}
