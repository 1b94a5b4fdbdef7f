/** Typed client for the latentshift explorer service. */

export interface Health {
  status: string;
  K: number;
  latent_dim: number;
  checkpoint_id: string;
}

export interface DirectionInfo {
  index: number;
  score: number;
  centroid_norm: number;
}

export interface ShiftSpec {
  k: number;
  eps: number;
}

export interface SweepSpec {
  k: number;
  lo: number;
  hi: number;
  n: number;
}

export interface GeneratedImage {
  /** data: URL usable directly as an <img> src */
  dataUrl: string;
  latentNorm: number;
  clamped: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function expectOk(response: Response): Promise<Response> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      detail = JSON.stringify((await response.json()).detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, `service returned ${response.status}: ${detail}`);
  }
  return response;
}

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async health(): Promise<Health> {
    const response = await expectOk(await fetch(this.url("/healthz")));
    return (await response.json()) as Health;
  }

  async directions(): Promise<DirectionInfo[]> {
    const response = await expectOk(await fetch(this.url("/directions")));
    return (await response.json()) as DirectionInfo[];
  }

  async generate(seed: number, shifts: ShiftSpec[]): Promise<GeneratedImage> {
    const response = await expectOk(
      await fetch(this.url("/generate"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ seed, shifts }),
      }),
    );
    const bytes = new Uint8Array(await response.arrayBuffer());
    return {
      dataUrl: `data:image/png;base64,${bytesToBase64(bytes)}`,
      latentNorm: Number(response.headers.get("X-Latent-Norm") ?? "0"),
      clamped: response.headers.get("X-Eps-Clamped") === "true",
    };
  }

  async strip(seed: number, shifts: ShiftSpec[], sweep: SweepSpec): Promise<string[]> {
    const response = await expectOk(
      await fetch(this.url("/strip"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ seed, shifts, sweep }),
      }),
    );
    const images = (await response.json()) as string[];
    return images.map((b64) => `data:image/png;base64,${b64}`);
  }
}
