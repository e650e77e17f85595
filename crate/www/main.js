// Drives the three demo panels. All numerics live in the WebAssembly
// module; this file only parses inputs, decodes the JSON payloads, and
// draws on the canvases.

import init, { idealized_curve, coupling_map, cooling_curve } from "./pkg/spincool_wasm.js";

const $ = (id) => document.getElementById(id);

// ---------------------------------------------------------------- plotting

const FONT = "12px system-ui, sans-serif";

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

// Line plot with y range [0, yMax], x range [0, xMax], light grid, and an
// optional dashed horizontal reference line.
function drawCurve(canvas, ys, { yMax = 0.55, refY = null, refLabel = "" } = {}) {
  const ctx = clear(canvas);
  const pad = { l: 48, r: 12, t: 10, b: 28 };
  const w = canvas.width - pad.l - pad.r;
  const h = canvas.height - pad.t - pad.b;
  const xMax = Math.max(1, ys.length - 1);
  const px = (x) => pad.l + (w * x) / xMax;
  const py = (y) => pad.t + h * (1 - y / yMax);

  ctx.strokeStyle = "#e4e8ec";
  ctx.fillStyle = "#5c6670";
  ctx.font = FONT;
  ctx.lineWidth = 1;
  for (let i = 0; i <= 5; i++) {
    const y = (yMax * i) / 5;
    ctx.beginPath();
    ctx.moveTo(pad.l, py(y));
    ctx.lineTo(pad.l + w, py(y));
    ctx.stroke();
    ctx.fillText(y.toFixed(2), 8, py(y) + 4);
  }
  for (let i = 0; i <= 4; i++) {
    const x = (xMax * i) / 4;
    ctx.fillText(Math.round(x), px(x) - 8, canvas.height - 8);
  }
  ctx.fillText("cycle", pad.l + w / 2 - 14, canvas.height - 8);

  if (refY !== null) {
    ctx.save();
    ctx.strokeStyle = "#b3261e";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(pad.l, py(refY));
    ctx.lineTo(pad.l + w, py(refY));
    ctx.stroke();
    ctx.restore();
    ctx.fillStyle = "#b3261e";
    ctx.fillText(refLabel, pad.l + 6, py(refY) - 5);
  }

  ctx.strokeStyle = "#0b6e99";
  ctx.lineWidth = 1.8;
  ctx.beginPath();
  ys.forEach((y, i) => (i === 0 ? ctx.moveTo(px(i), py(y)) : ctx.lineTo(px(i), py(y))));
  ctx.stroke();
}

// Blue-to-yellow color ramp for the heatmap, t in [0, 1].
function ramp(t) {
  const stops = [
    [38, 39, 110],
    [28, 109, 158],
    [46, 172, 156],
    [170, 211, 84],
    [250, 231, 85],
  ];
  const s = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(s), stops.length - 2);
  const f = s - i;
  return stops[i].map((c, k) => Math.round(c + f * (stops[i + 1][k] - c)));
}

function drawHeatmap(canvas, n, values, lo, hi) {
  const ctx = clear(canvas);
  const cell = document.createElement("canvas");
  cell.width = n;
  cell.height = n;
  const img = cell.getContext("2d").createImageData(n, n);
  values.forEach((v, i) => {
    const [r, g, b] = ramp(hi > lo ? (v - lo) / (hi - lo) : 0.5);
    img.data.set([r, g, b, 255], 4 * i);
  });
  cell.getContext("2d").putImageData(img, 0, 0);

  const size = Math.min(canvas.width - 120, canvas.height) - 20;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(cell, 10, 10, size, size);

  // Color bar.
  const bx = size + 40;
  for (let i = 0; i < size; i++) {
    const [r, g, b] = ramp(1 - i / size);
    ctx.fillStyle = `rgb(${r},${g},${b})`;
    ctx.fillRect(bx, 10 + i, 18, 1);
  }
  ctx.fillStyle = "#5c6670";
  ctx.font = FONT;
  ctx.fillText(`${hi.toFixed(1)} rad/s`, bx + 24, 18);
  ctx.fillText(`${lo.toFixed(1)} rad/s`, bx + 24, 10 + size);
}

// ---------------------------------------------------------------- wiring

function panel(buttonId, noteId, handler) {
  const button = $(buttonId);
  const note = $(noteId);
  button.addEventListener("click", () => {
    button.disabled = true;
    note.classList.remove("error");
    note.textContent = "running…";
    // Let the browser paint before the (synchronous) wasm call.
    setTimeout(() => {
      try {
        note.textContent = handler();
      } catch (err) {
        note.classList.add("error");
        note.textContent = String(err);
      } finally {
        button.disabled = false;
      }
    }, 20);
  });
  button.disabled = false;
}

init().then(() => {
  panel("ideal-run", "ideal-note", () => {
    const m = Number($("ideal-m").value);
    const mode = $("ideal-mode").value;
    const cycles = Number($("ideal-cycles").value);
    const curve = JSON.parse(idealized_curve(m, mode, cycles));
    drawCurve($("ideal-plot"), curve.p_up, {
      refY: curve.extraction_floor,
      refLabel: `extraction floor ${curve.extraction_floor.toFixed(4)}`,
    });
    const last = curve.p_up[curve.p_up.length - 1];
    return `M = ${m}, ${mode}: mean excited probability ${last.toExponential(3)} after ${cycles} cycles.`;
  });

  panel("map-run", "map-note", () => {
    const n = Number($("map-n").value);
    const hw = Number($("map-hw").value) * 1e-6;
    const map = JSON.parse(coupling_map(n, hw));
    drawHeatmap($("map-plot"), map.n, map.g_rad_s, map.g_min, map.g_max);
    const mid = map.g_rad_s[Math.floor(n / 2) * n + Math.floor(n / 2)];
    return `center ${mid.toFixed(1)} rad/s, range ${map.g_min.toFixed(1)} – ${map.g_max.toFixed(1)} rad/s across ±${$("map-hw").value} µm.`;
  });

  panel("dense-run", "dense-note", () => {
    const m = Number($("dense-m").value);
    const rates = $("dense-rates").value;
    const ladder = $("dense-ladder").value;
    const cycles = Number($("dense-cycles").value);
    const run = JSON.parse(cooling_curve(m, rates, ladder, cycles));
    drawCurve($("dense-plot"), run.p_up_mean, {
      refY: run.extraction_floor,
      refLabel: `extraction floor ${run.extraction_floor.toFixed(4)}`,
    });
    const last = run.p_up_mean[run.p_up_mean.length - 1];
    const sat = run.saturated_at === null ? "no plateau yet" : `plateau at cycle ${run.saturated_at}`;
    return `M = ${m}, ${rates}, ${ladder} ladder: final ${last.toFixed(4)} (${sat}); worst trace error ${run.max_trace_error.toExponential(1)}.`;
  });
}).catch((err) => {
  document.querySelectorAll(".note").forEach((n) => {
    n.classList.add("error");
    n.textContent = `failed to load the WebAssembly module: ${err}. Did you run wasm-pack? (see footer)`;
  });
});
