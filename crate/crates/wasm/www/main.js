import init, { continuation_path, share_sweep, solve_document } from "./pkg/gnep_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

const SAMPLE = {
  name: "s2",
  players: [
    { n: 1, c: [2.0], Q: [[1.0]], lower: [0.0], upper: [10.0] },
    { n: 1, c: [1.0], Q: [[1.0]], lower: [0.0], upper: [10.0] },
  ],
  joint: { m: 1, A: [[[1.0]], [[1.0]]], a: [[0.0], [0.0]], b: [1.0] },
  schedule: { tau0: 1.0, rho: 10.0, k_max: 6 },
};

function show(el, value) {
  el.classList.toggle("err", "error" in value);
  el.textContent = JSON.stringify(value, null, 1);
}

// Minimal line/scatter plot: series = [{points: [[x, y]], color, dots}].
function plot(canvas, series, { logx = false, logy = false, xlabel = "", ylabel = "", marks = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 44;
  ctx.clearRect(0, 0, W, H);
  const tx = (v) => (logx ? Math.log10(v) : v);
  const ty = (v) => (logy ? Math.log10(Math.max(v, 1e-300)) : v);
  const pts = series.flatMap((s) => s.points).concat(marks.map((m) => m.at));
  const xs = pts.map((p) => tx(p[0])), ys = pts.map((p) => ty(p[1]));
  let [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  if (x0 === x1) { x0 -= 1; x1 += 1; }
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const sx = (v) => pad + ((tx(v) - x0) / (x1 - x0)) * (W - 2 * pad);
  const sy = (v) => H - pad - ((ty(v) - y0) / (y1 - y0)) * (H - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  const fmt = (v, log) => (log ? "1e" + v.toFixed(0) : v.toPrecision(3));
  ctx.fillText(fmt(x0, logx), pad, H - pad + 14);
  ctx.fillText(fmt(x1, logx), W - pad - 30, H - pad + 14);
  ctx.fillText(fmt(y0, logy), 2, H - pad);
  ctx.fillText(fmt(y1, logy), 2, pad + 4);
  ctx.fillText(xlabel, W / 2 - 20, H - 8);
  ctx.fillText(ylabel, 4, pad - 10);

  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    ctx.beginPath();
    s.points.forEach(([x, y], k) => (k ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    if (s.dots) s.points.forEach(([x, y]) => ctx.fillRect(sx(x) - 2, sy(y) - 2, 5, 5));
  }
  for (const m of marks) {
    ctx.strokeStyle = ctx.fillStyle = m.color;
    ctx.beginPath();
    ctx.arc(sx(m.at[0]), sy(m.at[1]), 6, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillText(m.label, sx(m.at[0]) + 8, sy(m.at[1]) - 8);
  }
}

function runPath() {
  const out = JSON.parse(continuation_path(num("c1"), num("c2"), num("b"), num("tau0"), num("rho"), num("kmax")));
  show($("path-out"), out);
  if (out.error) return;
  const b = num("b");
  const path = out.stages.map((s) => s.x);
  const marks = out.exact.x ? [{ at: out.exact.x, color: "#c00", label: "exact" }] : [];
  plot($("path-plot"), [
    { points: [[0, b], [b, 0]], color: "#bbb" },
    { points: path, color: "#06c", dots: true },
  ], { xlabel: "x1", ylabel: "x2", marks });
}

function runSweep() {
  const out = JSON.parse(share_sweep(num("c1"), num("c2"), num("b"), num("sweep-tau"), num("lo"), num("hi"), 121));
  if (out.error) return show($("sweep-out"), out);
  const pts = out.points;
  plot($("sweep-plot"), [
    { points: pts.map((p) => [p.u1, p.g[0]]), color: "#06c" },
    { points: pts.map((p) => [p.u1, p.g[1]]), color: "#c60" },
  ], { xlabel: "u1 (u2 = b - u1)", ylabel: "g1 (blue), g2 (orange)" });
  // the master equilibrium is where the two curves meet
  let best = pts[0];
  for (const p of pts) if (Math.abs(p.g[0] - p.g[1]) < Math.abs(best.g[0] - best.g[1])) best = p;
  show($("sweep-out"), { tau: out.tau, nearest_crossing: best });
}

function runDoc() {
  const out = JSON.parse(solve_document($("doc").value));
  if (out.error) return show($("doc-out"), out);
  plot($("doc-plot"), [{ points: out.feasibility.filter((p) => p[1] > 0), color: "#060", dots: true }],
    { logx: true, logy: true, xlabel: "tau", ylabel: "P" });
  show($("doc-out"), out.summary);
}

await init();
$("doc").value = JSON.stringify(SAMPLE, null, 2);
$("run-path").onclick = runPath;
$("run-sweep").onclick = runSweep;
$("run-doc").onclick = runDoc;
runPath();
runSweep();
