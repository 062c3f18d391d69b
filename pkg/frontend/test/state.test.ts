import { describe, expect, it } from "vitest";

import {
  beginExplain,
  beginUpload,
  camOff,
  explainFailed,
  explainSucceeded,
  initialSession,
  isBusy,
  uploadFailed,
  uploadSucceeded,
} from "../src/state.js";
import { FIXTURE_RESPONSE } from "./fixtures.js";

describe("session transitions", () => {
  it("tracks a successful upload in history", () => {
    let s = beginUpload(initialSession(), "a.png");
    expect(isBusy(s)).toBe(true);
    s = uploadSucceeded(s, "data:RAW", FIXTURE_RESPONSE);
    expect(s.phase).toBe("ready");
    expect(s.history).toEqual([
      { fileName: "a.png", topDisease: "Hernia", topProbability: 0.97 },
    ]);
    s = uploadSucceeded(beginUpload(s, "b.png"), "data:RAW2", FIXTURE_RESPONSE);
    expect(s.history).toHaveLength(2);
  });

  it("a failed upload preserves the previous results and history", () => {
    let s = uploadSucceeded(
      beginUpload(initialSession(), "a.png"), "data:RAW", FIXTURE_RESPONSE,
    );
    s = uploadFailed(beginUpload(s, "b.png"), "boom");
    expect(s.error).toBe("boom");
    expect(s.phase).toBe("ready");
    expect(s.response).toBe(FIXTURE_RESPONSE);
    expect(s.history).toHaveLength(1);
  });

  it("a failed first upload returns to idle", () => {
    const s = uploadFailed(beginUpload(initialSession(), "a.png"), "down");
    expect(s.phase).toBe("idle");
    expect(s.response).toBeNull();
  });

  it("cam toggling round-trips to the raw preview", () => {
    let s = uploadSucceeded(
      beginUpload(initialSession(), "a.png"), "data:RAW", FIXTURE_RESPONSE,
    );
    s = beginExplain(s, "Hernia");
    expect(isBusy(s)).toBe(true);
    s = explainSucceeded(s, "Hernia", "data:CAM");
    expect(s.camOverlayUrl).toBe("data:CAM");
    s = camOff(s);
    expect(s.camDisease).toBeNull();
    expect(s.camOverlayUrl).toBeNull();
    expect(s.previewUrl).toBe("data:RAW");
  });

  it("a failed explain clears the overlay and reports inline", () => {
    let s = uploadSucceeded(
      beginUpload(initialSession(), "a.png"), "data:RAW", FIXTURE_RESPONSE,
    );
    s = explainFailed(beginExplain(s, "Edema"), "cam broke");
    expect(s.camOverlayUrl).toBeNull();
    expect(s.error).toBe("cam broke");
    expect(s.phase).toBe("ready");
  });

  it("transitions never mutate their input", () => {
    const before = initialSession();
    const frozen = structuredClone(before);
    uploadSucceeded(beginUpload(before, "a.png"), "data:RAW", FIXTURE_RESPONSE);
    expect(before).toEqual(frozen);
  });
});
