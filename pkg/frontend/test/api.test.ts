import { describe, expect, it, vi } from "vitest";

import { heatmapDataUrl, ServiceClient, ServiceError } from "../src/api.js";
import { FIXTURE_HEALTH, FIXTURE_RESPONSE, jsonResponse } from "./fixtures.js";

describe("ServiceClient.predict", () => {
  it("posts the image as multipart to /predict", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(FIXTURE_RESPONSE));
    const client = new ServiceClient("http://svc:8000", fetchMock);
    const blob = new Blob([new Uint8Array([1, 2, 3])], { type: "image/png" });
    const result = await client.predict(blob);
    expect(result).toEqual(FIXTURE_RESPONSE);
    const [url, init] = fetchMock.mock.calls[0]!;
    expect(url).toBe("http://svc:8000/predict");
    expect(init?.method).toBe("POST");
    expect(init?.body).toBeInstanceOf(FormData);
    expect((init?.body as FormData).get("image")).not.toBeNull();
  });

  it("passes the explain target through the query string", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(FIXTURE_RESPONSE));
    const client = new ServiceClient("http://svc:8000", fetchMock);
    await client.predict(new Blob(["x"]), "Pleural_Thickening");
    expect(fetchMock.mock.calls[0]![0]).toBe(
      "http://svc:8000/predict?explain=Pleural_Thickening",
    );
  });

  it("maps service errors to ServiceError with the wire detail", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ detail: "cannot decode image" }, 400),
    );
    const client = new ServiceClient("http://svc:8000", fetchMock);
    const err = await client.predict(new Blob(["x"])).catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(400);
    expect(err.message).toBe("cannot decode image");
  });

  it("falls back to a generic message on non-JSON error bodies", async () => {
    const fetchMock = vi.fn(
      async () => new Response("<html>bad gateway</html>", { status: 502 }),
    );
    const client = new ServiceClient("http://svc:8000", fetchMock);
    const err = await client.predict(new Blob(["x"])).catch((e) => e);
    expect(err.message).toBe("service error (HTTP 502)");
  });
});

describe("ServiceClient.health", () => {
  it("parses the health document", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(FIXTURE_HEALTH));
    const client = new ServiceClient("http://svc:8000", fetchMock);
    const health = await client.health();
    expect(health.cam_supported).toBe(true);
    expect(health.diseases).toHaveLength(14);
    expect(fetchMock.mock.calls[0]![0]).toBe("http://svc:8000/health");
  });
});

describe("heatmapDataUrl", () => {
  it("wraps base64 PNG bytes as a data URL", () => {
    expect(heatmapDataUrl("QUJD")).toBe("data:image/png;base64,QUJD");
  });
});
