/** HTTP client for the inpainting service.
 *
 * One job: POST image + mask PNGs to /api/inpaint and hand back the result
 * PNG bytes. 429 responses are retried with backoff (Retry-After when the
 * server sends it) up to MAX_RETRIES; everything else surfaces as ApiError
 * for the banner. fetch and sleep are injectable so tests run without a
 * server or real timers.
 */

export const MAX_RETRIES = 3;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export type FetchFn = (url: string, init: RequestInit) => Promise<Response>;
export type SleepFn = (ms: number) => Promise<void>;

const realSleep: SleepFn = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // non-JSON body, fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export interface InpaintOptions {
  raw?: boolean;
}

export class InpaintClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchFn;
  private readonly sleepFn: SleepFn;

  constructor(baseUrl = "", fetchFn?: FetchFn, sleepFn?: SleepFn) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
    this.sleepFn = sleepFn ?? realSleep;
  }

  /** Returns the inpainted PNG bytes. Valid pixels equal the upload. */
  async inpaint(
    imagePng: Uint8Array,
    maskPng: Uint8Array,
    options: InpaintOptions = {},
  ): Promise<Uint8Array> {
    for (let attempt = 0; ; attempt++) {
      const form = new FormData();
      form.append("image", new Blob([imagePng as BlobPart], { type: "image/png" }), "image.png");
      form.append("mask", new Blob([maskPng as BlobPart], { type: "image/png" }), "mask.png");
      if (options.raw) form.append("raw", "1");

      const response = await this.fetchFn(`${this.baseUrl}/api/inpaint`, {
        method: "POST",
        body: form,
      });
      if (response.ok) {
        return new Uint8Array(await response.arrayBuffer());
      }
      if (response.status === 429 && attempt < MAX_RETRIES) {
        const retryAfter = Number(response.headers.get("retry-after"));
        const delayMs =
          Number.isFinite(retryAfter) && retryAfter > 0
            ? retryAfter * 1000
            : 500 * 2 ** attempt;
        await this.sleepFn(delayMs);
        continue;
      }
      throw new ApiError(response.status, await errorMessage(response));
    }
  }

  async health(): Promise<{ status: string; model_step: number; image_size: number }> {
    const response = await this.fetchFn(`${this.baseUrl}/api/health`, { method: "GET" });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return response.json();
  }
}
