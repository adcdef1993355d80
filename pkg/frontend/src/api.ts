/** Thin fetch client for the routing service; the console uses nothing else. */

import type { Assignment, FleetSnapshot, PredictResponse, RoutingDecision } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON bodies fall through to the status check below
  }
  if (!response.ok) {
    const detail =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${response.status}`;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class ConsoleApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  health(): Promise<{ status: string; model: string }> {
    return request(this.url("/v1/healthz"));
  }

  predict(text: string): Promise<PredictResponse> {
    return request(this.url("/v1/predict"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  route(text: string): Promise<RoutingDecision> {
    return request(this.url("/v1/route"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  fleet(): Promise<FleetSnapshot> {
    return request(this.url("/v1/fleet"));
  }

  confirm(assignmentId: string): Promise<Assignment> {
    return request(this.url(`/v1/assignments/${assignmentId}/confirm`), { method: "POST" });
  }

  release(assignmentId: string): Promise<Assignment> {
    return request(this.url(`/v1/assignments/${assignmentId}/release`), { method: "POST" });
  }
}
