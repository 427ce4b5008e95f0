import init, { heatKernelField, lltCurve, glSnapshot } from "./pkg/rcmlab_web.js";

const num = (id) => Number(document.getElementById(id).value);

function call(msgId, f) {
  const msg = document.getElementById(msgId);
  msg.className = "";
  msg.textContent = "";
  try {
    const t0 = performance.now();
    const out = JSON.parse(f());
    msg.textContent = `${((performance.now() - t0) / 1000).toFixed(2)} s`;
    return out;
  } catch (e) {
    msg.className = "err";
    msg.textContent = String(e);
    return null;
  }
}

function heatmap(canvas, values, color) {
  const ctx = canvas.getContext("2d");
  const n = values.length;
  const img = ctx.createImageData(n, n);
  values.forEach((row, y) => row.forEach((v, x) => {
    const [r, g, b] = color(v);
    const i = 4 * ((n - 1 - y) * n + x);
    img.data.set([r, g, b, 255], i);
  }));
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function runHeatKernel() {
  const out = call("hk-msg", () => heatKernelField(num("hk-side"), num("hk-a"), num("hk-b"), num("hk-t"), num("hk-seed")));
  if (!out) return;
  heatmap(document.getElementById("hk-canvas"), out.values, (v) => {
    const s = Math.sqrt(v / out.max);
    return [255 * s, 80 * s, 255 * (1 - s)];
  });
}

function runLlt() {
  const ns = document.getElementById("llt-ns").value.split(",").map((s) => Number(s.trim()));
  const out = call("llt-msg", () => lltCurve(num("llt-a"), num("llt-b"), Uint32Array.from(ns), num("llt-seed")));
  if (!out) return;
  const canvas = document.getElementById("llt-canvas");
  const ctx = canvas.getContext("2d");
  const pad = 40;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const lx = out.n.map(Math.log);
  const ly = out.sup_error.map(Math.log);
  const [x0, x1] = [Math.min(...lx), Math.max(...lx)];
  const [y0, y1] = [Math.min(...ly), Math.max(...ly)];
  const px = (x) => pad + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * w;
  const py = (y) => pad + h - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * h;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#333";
  ctx.strokeRect(pad, pad, w, h);
  ctx.beginPath();
  lx.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ly[i])) : ctx.moveTo(px(x), py(ly[i]))));
  ctx.strokeStyle = "#c33";
  ctx.stroke();
  ctx.fillStyle = "#333";
  lx.forEach((x, i) => {
    ctx.fillRect(px(x) - 2, py(ly[i]) - 2, 4, 4);
    ctx.fillText(`n=${out.n[i]}: ${out.sup_error[i].toExponential(2)}`, px(x) - 30, py(ly[i]) - 8);
  });
  ctx.fillText("log sup error vs log n", pad, pad - 10);
}

function runSnapshot() {
  const out = call("gl-msg", () => glSnapshot(num("gl-side"), num("gl-lambda"), num("gl-seed")));
  if (!out) return;
  const m = out.max_abs || 1;
  heatmap(document.getElementById("gl-canvas"), out.values, (v) => {
    const s = v / m;
    return s >= 0 ? [255, 255 * (1 - s), 255 * (1 - s)] : [255 * (1 + s), 255 * (1 + s), 255];
  });
}

await init();
document.getElementById("hk-run").onclick = runHeatKernel;
document.getElementById("llt-run").onclick = runLlt;
document.getElementById("gl-run").onclick = runSnapshot;
runHeatKernel();
runLlt();
runSnapshot();
