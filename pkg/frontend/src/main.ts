import { ServiceClient } from "./api.js";
import { App } from "./app.js";

declare global {
  interface Window {
    DACNET_SERVICE_URL?: string;
  }
}

function readPreview(file: Blob): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = () => reject(reader.error ?? new Error("could not read file"));
    reader.readAsDataURL(file);
  });
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const baseUrl = window.DACNET_SERVICE_URL ?? "http://127.0.0.1:8000";
  const client = new ServiceClient(baseUrl);
  let camSupported = true;
  try {
    camSupported = (await client.health()).cam_supported;
  } catch {
    // service not up yet; uploads will surface the error inline
  }
  new App(root, { client, readPreview, camSupported });
}

void boot();
