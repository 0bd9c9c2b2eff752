import { App, Panel } from "./app.js";
import { AnnotationClient } from "./client.js";
import { Primitive } from "./scene.js";

/** Canvas adapter replaying render primitives. The 2D overlay canvas is
 * sized to the annotation image, so primitive coordinates ARE image pixels. */
class CanvasPanel implements Panel {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly background: HTMLImageElement | null = null,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      throw new Error("canvas 2d context unavailable");
    }
    this.ctx = ctx;
  }

  draw(prims: Primitive[]): void {
    const { ctx, canvas } = this;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.background) {
      ctx.drawImage(this.background, 0, 0, canvas.width, canvas.height);
    }
    for (const p of prims) {
      if (p.kind === "line") {
        ctx.strokeStyle = p.color;
        ctx.lineWidth = p.width;
        ctx.beginPath();
        ctx.moveTo(p.x1, p.y1);
        ctx.lineTo(p.x2, p.y2);
        ctx.stroke();
      } else if (p.kind === "circle") {
        ctx.fillStyle = p.color;
        ctx.beginPath();
        ctx.arc(p.x, p.y, p.r, 0, 2 * Math.PI);
        ctx.fill();
      } else {
        ctx.fillStyle = p.color;
        ctx.fillText(p.text, p.x, p.y);
      }
    }
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? `http://${window.location.hostname}:8008`;
  const client = new AnnotationClient(base);
  const tree = await client.tree();

  const three = document.getElementById("view3d") as HTMLCanvasElement;
  const two = document.getElementById("view2d") as HTMLCanvasElement;
  const statusEl = document.getElementById("status")!;
  const bannerEl = document.getElementById("banner")!;

  let background: HTMLImageElement | null = null;
  const bg = params.get("bg");
  if (bg) {
    background = new Image();
    background.src = `${base}/static/${bg}`;
  }

  const app = new App(
    client,
    tree,
    {
      three: new CanvasPanel(three),
      two: new CanvasPanel(two, background),
      status: (msg) => {
        statusEl.textContent = msg;
      },
      banner: (msg) => {
        bannerEl.textContent = msg ?? "";
        (bannerEl as HTMLElement).style.display = msg ? "block" : "none";
      },
    },
    three.width,
  );

  const index = params.get("index");
  await app.start(index === null ? undefined : Number(index));
  // size the overlay canvas to the annotation image so payload pixels map 1:1
  if (app.state) {
    two.width = app.state.intrinsics.width;
    two.height = app.state.intrinsics.height;
    app.redraw();
  }

  window.addEventListener("keydown", (event) => {
    if (event.key === "s" && (event.ctrlKey || event.metaKey)) {
      event.preventDefault();
    }
    void app.handleKey(event.key, event.ctrlKey || event.metaKey);
  });
}

void boot();
