import { ApiClient, DirectionInfo, ShiftSpec } from "./api.js";
import {
  SessionState,
  exportSession,
  freshSession,
  importSession,
  loadSession,
  saveSession,
} from "./state.js";

const SLIDER_MIN = -8;
const SLIDER_MAX = 8;
const MAX_STRIP = 32;

export interface AppOptions {
  /** trailing debounce for slider drags; latest value wins */
  debounceMs?: number;
}

/** Single-page explorer: pick a direction, drag the magnitude, stack edits,
 * sweep traversal strips. Every pixel comes from the service; the client
 * never synthesises images. */
export class ExplorerApp {
  private readonly debounceMs: number;
  private checkpointId = "";
  private directions: DirectionInfo[] = [];
  private session: SessionState = freshSession();
  private activeDirection: number | null = null;
  private sliderEps = 0;

  private queue: Promise<unknown> = Promise.resolve();
  private debounceTimer: ReturnType<typeof setTimeout> | undefined;
  private previewRequestId = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 100;
  }

  async init(): Promise<void> {
    this.renderSkeleton();
    try {
      const health = await this.api.health();
      this.checkpointId = health.checkpoint_id;
      this.directions = await this.api.directions();
    } catch (error) {
      this.showBanner(`service unreachable: ${String(error)}`);
      return;
    }
    this.hideBanner();
    this.session = loadSession(this.checkpointId);
    const first = this.directions[0];
    this.activeDirection = this.session.sweepDirection ?? first?.index ?? null;
    this.renderDirectionPanel();
    this.renderStack();
    this.syncSessionWidgets();
    await this.refreshPreview();
  }

  /** Resolves once no debounce is pending and all queued requests settled. */
  async whenIdle(): Promise<void> {
    for (;;) {
      if (this.debounceTimer === undefined) {
        const tail = this.queue;
        await tail.catch(() => {});
        if (this.debounceTimer === undefined && this.queue === tail) {
          return;
        }
      } else {
        await new Promise((resolve) => setTimeout(resolve, 5));
      }
    }
  }

  // --- rendering -----------------------------------------------------------

  private element<T extends HTMLElement>(role: string): T {
    const node = this.root.querySelector(`[data-role="${role}"]`);
    if (!node) {
      throw new Error(`missing UI element ${role}`);
    }
    return node as T;
  }

  private renderSkeleton(): void {
    this.root.innerHTML = `
      <div data-role="banner" class="banner" hidden>
        <span data-role="banner-text"></span>
        <button data-role="retry">retry</button>
      </div>
      <div class="layout">
        <aside>
          <h2>Directions</h2>
          <ul data-role="direction-list" class="direction-list"></ul>
        </aside>
        <main>
          <div class="preview-box">
            <img data-role="preview" alt="preview" width="256" height="256" />
            <div>
              <span data-role="latent-norm"></span>
              <span data-role="clamp-note"></span>
            </div>
          </div>
          <div class="slider-box">
            <label data-role="slider-label"></label>
            <input data-role="slider" type="range"
                   min="${SLIDER_MIN}" max="${SLIDER_MAX}" step="0.05" value="0" />
            <span data-role="slider-value">0.00</span>
            <button data-role="commit">commit edit</button>
          </div>
          <div class="stack-box">
            <h3>Edit stack <button data-role="clear-stack">clear</button></h3>
            <ol data-role="stack-list"></ol>
            <label>seed <input data-role="seed" type="number" value="0" /></label>
          </div>
          <div class="strip-box">
            <h3>Traversal strip</h3>
            <label>lo <input data-role="strip-lo" type="number" value="-6" /></label>
            <label>hi <input data-role="strip-hi" type="number" value="6" /></label>
            <label>n <input data-role="strip-n" type="number" value="7" min="1" max="${MAX_STRIP}" /></label>
            <button data-role="strip-request">sweep</button>
            <div data-role="strip" class="strip"></div>
          </div>
          <div class="session-box">
            <button data-role="export">export session</button>
            <button data-role="import">import session</button>
            <textarea data-role="session-json" rows="3"></textarea>
          </div>
        </main>
      </div>`;

    this.element<HTMLButtonElement>("retry").addEventListener("click", () => {
      void this.init();
    });
    const slider = this.element<HTMLInputElement>("slider");
    slider.addEventListener("input", () => {
      this.onSliderInput(Number(slider.value));
    });
    this.element<HTMLButtonElement>("commit").addEventListener("click", () => {
      this.commit();
    });
    this.element<HTMLButtonElement>("clear-stack").addEventListener("click", () => {
      this.session.stack = [];
      this.persist();
      this.renderStack();
      void this.refreshPreview();
    });
    const seed = this.element<HTMLInputElement>("seed");
    seed.addEventListener("change", () => {
      this.session.seed = Number(seed.value) | 0;
      this.persist();
      void this.refreshPreview();
    });
    this.element<HTMLButtonElement>("strip-request").addEventListener("click", () => {
      void this.requestStrip();
    });
    this.element<HTMLButtonElement>("export").addEventListener("click", () => {
      this.element<HTMLTextAreaElement>("session-json").value = exportSession(this.session);
    });
    this.element<HTMLButtonElement>("import").addEventListener("click", () => {
      try {
        this.session = importSession(this.element<HTMLTextAreaElement>("session-json").value);
      } catch (error) {
        this.showInlineError(`import failed: ${String(error)}`);
        return;
      }
      this.persist();
      this.renderStack();
      this.syncSessionWidgets();
      void this.refreshPreview();
    });
  }

  private showBanner(text: string): void {
    const banner = this.element<HTMLDivElement>("banner");
    banner.hidden = false;
    this.element<HTMLSpanElement>("banner-text").textContent = text;
  }

  private hideBanner(): void {
    this.element<HTMLDivElement>("banner").hidden = true;
  }

  private showInlineError(text: string): void {
    this.element<HTMLSpanElement>("clamp-note").textContent = text;
  }

  private renderDirectionPanel(): void {
    const list = this.element<HTMLUListElement>("direction-list");
    list.innerHTML = "";
    for (const info of this.directions) {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.dataset.index = String(info.index);
      button.textContent = `direction ${info.index} — score ${info.score.toFixed(3)}`;
      if (info.index === this.activeDirection) {
        button.classList.add("active");
      }
      button.addEventListener("click", () => {
        this.selectDirection(info.index);
      });
      item.appendChild(button);
      list.appendChild(item);
    }
    this.updateSliderLabel();
  }

  private renderStack(): void {
    const list = this.element<HTMLOListElement>("stack-list");
    list.innerHTML = "";
    this.session.stack.forEach((shift, position) => {
      const item = document.createElement("li");
      item.textContent = `direction ${shift.k}, magnitude ${shift.eps.toFixed(2)}`;
      const remove = document.createElement("button");
      remove.textContent = "x";
      remove.addEventListener("click", () => {
        this.session.stack.splice(position, 1);
        this.persist();
        this.renderStack();
        void this.refreshPreview();
      });
      item.appendChild(remove);
      list.appendChild(item);
    });
  }

  private syncSessionWidgets(): void {
    this.element<HTMLInputElement>("seed").value = String(this.session.seed);
    this.updateSliderLabel();
  }

  private updateSliderLabel(): void {
    const label = this.activeDirection === null ? "no direction" : `direction ${this.activeDirection}`;
    this.element<HTMLLabelElement>("slider-label").textContent = label;
    this.element<HTMLSpanElement>("slider-value").textContent = this.sliderEps.toFixed(2);
  }

  // --- interactions ----------------------------------------------------------

  selectDirection(index: number): void {
    this.activeDirection = index;
    this.session.sweepDirection = index;
    this.persist();
    this.sliderEps = 0;
    this.element<HTMLInputElement>("slider").value = "0";
    this.renderDirectionPanel();
    void this.refreshPreview();
  }

  onSliderInput(eps: number): void {
    this.sliderEps = Math.max(SLIDER_MIN, Math.min(SLIDER_MAX, eps));
    this.updateSliderLabel();
    if (this.debounceTimer !== undefined) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = undefined;
      void this.refreshPreview();
    }, this.debounceMs);
  }

  commit(): void {
    if (this.activeDirection === null || this.sliderEps === 0) {
      return;
    }
    this.session.stack = [...this.session.stack, { k: this.activeDirection, eps: this.sliderEps }];
    this.persist();
    this.sliderEps = 0;
    this.element<HTMLInputElement>("slider").value = "0";
    this.renderStack();
    this.updateSliderLabel();
    void this.refreshPreview();
  }

  /** Stack plus the live (uncommitted) slider edit. */
  previewShifts(): ShiftSpec[] {
    if (this.activeDirection === null || this.sliderEps === 0) {
      return [...this.session.stack];
    }
    return [...this.session.stack, { k: this.activeDirection, eps: this.sliderEps }];
  }

  private schedule<T>(job: () => Promise<T>): Promise<T> {
    const next = this.queue.then(job);
    this.queue = next.then(
      () => undefined,
      () => undefined,
    );
    return next;
  }

  refreshPreview(): Promise<void> {
    const requestId = ++this.previewRequestId;
    const shifts = this.previewShifts();
    return this.schedule(async () => {
      if (requestId !== this.previewRequestId) {
        return; // a newer drag superseded this render
      }
      try {
        const image = await this.api.generate(this.session.seed, shifts);
        if (requestId !== this.previewRequestId) {
          return;
        }
        this.element<HTMLImageElement>("preview").src = image.dataUrl;
        this.element<HTMLSpanElement>("latent-norm").textContent =
          `latent norm ${image.latentNorm.toFixed(3)}`;
        this.element<HTMLSpanElement>("clamp-note").textContent = image.clamped
          ? "magnitude clamped to ±8"
          : "";
      } catch (error) {
        this.showInlineError(String(error));
      }
    });
  }

  requestStrip(): Promise<void> {
    if (this.activeDirection === null) {
      return Promise.resolve();
    }
    const lo = Number(this.element<HTMLInputElement>("strip-lo").value);
    const hi = Number(this.element<HTMLInputElement>("strip-hi").value);
    const n = Number(this.element<HTMLInputElement>("strip-n").value);
    if (!Number.isFinite(n) || n < 1 || n > MAX_STRIP) {
      this.showInlineError(`strip size must be in [1, ${MAX_STRIP}]`);
      return Promise.resolve();
    }
    const direction = this.activeDirection;
    const stack = [...this.session.stack];
    return this.schedule(async () => {
      try {
        const images = await this.api.strip(this.session.seed, stack, {
          k: direction,
          lo,
          hi,
          n,
        });
        this.renderStrip(images, lo, hi);
      } catch (error) {
        this.showInlineError(String(error));
      }
    });
  }

  private renderStrip(images: string[], lo: number, hi: number): void {
    const container = this.element<HTMLDivElement>("strip");
    container.innerHTML = "";
    images.forEach((dataUrl, position) => {
      const eps = images.length === 1 ? lo : lo + (position * (hi - lo)) / (images.length - 1);
      const thumb = document.createElement("img");
      thumb.dataset.role = "strip-thumb";
      thumb.dataset.eps = eps.toFixed(4);
      thumb.width = 64;
      thumb.height = 64;
      thumb.src = dataUrl;
      thumb.addEventListener("click", () => {
        this.sliderEps = eps;
        this.element<HTMLInputElement>("slider").value = String(eps);
        this.updateSliderLabel();
        void this.refreshPreview();
      });
      container.appendChild(thumb);
    });
  }

  private persist(): void {
    if (this.checkpointId) {
      saveSession(this.checkpointId, this.session);
    }
  }
}
