import { heatmapDataUrl, ServiceClient } from "./api.js";
import { render } from "./render.js";
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
  type ReviewSession,
} from "./state.js";

export type PreviewReader = (file: Blob) => Promise<string>;

export interface AppOptions {
  client: ServiceClient;
  readPreview: PreviewReader;
  camSupported?: boolean;
}

/**
 * Binds the pure view to a root element. One action may be in flight at a
 * time: while a request is pending the controls render disabled and any
 * stray events are ignored.
 */
export class App {
  session: ReviewSession;
  private lastFile: Blob | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly options: AppOptions,
  ) {
    this.session = initialSession(options.camSupported ?? true);
    root.addEventListener("change", (event) => {
      const target = event.target as HTMLElement;
      if (target.getAttribute("data-action") === "upload") {
        const input = target as HTMLInputElement;
        const file = input.files && input.files[0];
        if (file) void this.upload(file, file.name);
      }
    });
    root.addEventListener("click", (event) => {
      const target = (event.target as HTMLElement).closest("[data-action]");
      if (!target) return;
      const action = target.getAttribute("data-action");
      const disease = target.getAttribute("data-disease");
      if (action === "retry") void this.retry();
      else if (action === "cam-on" && disease) void this.toggleCam(disease);
      else if (action === "cam-off") this.apply(camOff(this.session));
    });
    this.apply(this.session);
  }

  private apply(next: ReviewSession): void {
    this.session = next;
    this.root.innerHTML = render(next);
  }

  async upload(file: Blob, fileName: string): Promise<void> {
    if (isBusy(this.session)) return;
    this.lastFile = file;
    this.apply(beginUpload(this.session, fileName));
    try {
      const [preview, response] = await Promise.all([
        this.options.readPreview(file),
        this.options.client.predict(file),
      ]);
      this.apply(uploadSucceeded(this.session, preview, response));
    } catch (error) {
      this.apply(uploadFailed(this.session, describe(error)));
    }
  }

  async retry(): Promise<void> {
    if (this.lastFile && this.session.fileName) {
      await this.upload(this.lastFile, this.session.fileName);
    }
  }

  async toggleCam(disease: string): Promise<void> {
    if (isBusy(this.session) || !this.lastFile || !this.session.camSupported) return;
    this.apply(beginExplain(this.session, disease));
    try {
      const response = await this.options.client.predict(this.lastFile, disease);
      if (!response.heatmap) throw new Error("service returned no heatmap");
      this.apply(
        explainSucceeded(this.session, disease, heatmapDataUrl(response.heatmap.png_base64)),
      );
    } catch (error) {
      this.apply(explainFailed(this.session, describe(error)));
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof Error) return error.message;
  return String(error);
}
