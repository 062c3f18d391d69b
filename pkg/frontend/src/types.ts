// Wire types mirroring the inference service's JSON responses.

export interface TopFinding {
  disease: string;
  probability: number;
}

export interface HeatmapPayload {
  disease: string;
  png_base64: string;
}

export interface PredictionResponse {
  probabilities: Record<string, number>; // all 14 diseases
  top5: TopFinding[];
  flagged: string[];
  model_fingerprint: string;
  warning?: string;
  heatmap?: HeatmapPayload;
}

export interface HealthResponse {
  status: string;
  model_fingerprint: string;
  diseases: string[];
  thresholds_fitted_on: string;
  cam_supported: boolean;
  uptime_s: number;
}
