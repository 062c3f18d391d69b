import type { HealthResponse, PredictionResponse } from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ServiceError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client for the inference service; all numbers shown in the UI come
 *  from here, never from client-side computation. */
export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async predict(image: Blob, explain?: string): Promise<PredictionResponse> {
    const form = new FormData();
    form.append("image", image);
    const query = explain ? `?explain=${encodeURIComponent(explain)}` : "";
    const response = await this.fetchImpl(`${this.baseUrl}/predict${query}`, {
      method: "POST",
      body: form,
    });
    return this.parse(response);
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/health`);
    return this.parse(response);
  }

  private async parse<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = `service error (HTTP ${response.status})`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}

export function heatmapDataUrl(pngBase64: string): string {
  return `data:image/png;base64,${pngBase64}`;
}
