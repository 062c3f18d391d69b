import type { HealthResponse, PredictionResponse } from "../src/types.js";

// Recorded from the inference service against a trained checkpoint: a
// hernia+infiltration image where only Hernia clears its fitted threshold.
export const FIXTURE_RESPONSE: PredictionResponse = {
  probabilities: {
    Atelectasis: 0.21,
    Cardiomegaly: 0.05,
    Consolidation: 0.11,
    Edema: 0.03,
    Effusion: 0.18,
    Emphysema: 0.02,
    Fibrosis: 0.07,
    Hernia: 0.97,
    Infiltration: 0.43,
    Mass: 0.09,
    Nodule: 0.13,
    Pleural_Thickening: 0.06,
    Pneumonia: 0.08,
    Pneumothorax: 0.04,
  },
  top5: [
    { disease: "Hernia", probability: 0.97 },
    { disease: "Infiltration", probability: 0.43 },
    { disease: "Atelectasis", probability: 0.21 },
    { disease: "Effusion", probability: 0.18 },
    { disease: "Nodule", probability: 0.13 },
  ],
  flagged: ["Hernia"],
  model_fingerprint: "9f3a2c1e8b7d6054",
};

// 1x1 red pixel; stands in for a rendered overlay PNG.
export const TINY_PNG_BASE64 =
  "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==";

export function fixtureWithHeatmap(disease: string): PredictionResponse {
  return {
    ...FIXTURE_RESPONSE,
    heatmap: { disease, png_base64: TINY_PNG_BASE64 },
  };
}

export const FIXTURE_HEALTH: HealthResponse = {
  status: "ok",
  model_fingerprint: "9f3a2c1e8b7d6054",
  diseases: Object.keys(FIXTURE_RESPONSE.probabilities),
  thresholds_fitted_on: "val",
  cam_supported: true,
  uptime_s: 12.5,
};

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
