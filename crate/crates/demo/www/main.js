import init, { paths, recover, counterexample } from "./pkg/inelastic_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function call(f, ...args) {
  const v = JSON.parse(f(...args));
  if (v.error) throw new Error(v.error);
  return v;
}

// Draws several series sharing the x axis, each scaled into the canvas.
function plot(canvas, xs, series, bands = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const pad = 30;
  const x0 = xs[0], x1 = xs[xs.length - 1];
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const y of s.ys) { if (y < lo) lo = y; if (y > hi) hi = y; }
  if (hi === lo) hi = lo + 1;
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - 2 * pad);
  ctx.fillStyle = "rgba(204,51,51,0.12)";
  for (const [a, b] of bands) ctx.fillRect(px(a), pad, Math.max(1, px(b) - px(a)), h - 2 * pad);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath(); ctx.moveTo(pad, py(0)); ctx.lineTo(w - pad, py(0)); ctx.stroke();
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  }
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(3), 2, pad);
  ctx.fillText(lo.toPrecision(3), 2, h - pad);
  ctx.fillText(String(x1), w - pad - 10, h - 8);
}

function guard(outId, f) {
  try { f(); } catch (e) { $(outId).textContent = "error: " + e.message; }
}

function runPaths() {
  guard("p-out", () => {
    const v = call(paths, num("p-dt"), num("p-t"), num("p-seed"));
    plot($("p-canvas"), v.t, [
      { ys: v.construction_x, color: "#1f6fb4" },
      { ys: v.sde_x, color: "#d2691e" },
    ]);
    const last = (a) => a[a.length - 1].toFixed(4);
    $("p-out").textContent =
      `X at the horizon: construction ${last(v.construction_x)}, integrator ${last(v.sde_x)}\n` +
      `absorbed velocity A: construction ${last(v.construction_a)}, integrator ${last(v.sde_a)}\n` +
      `impact episodes in the integrator trace: ${v.impacts}`;
  });
}

function runRecover() {
  guard("r-out", () => {
    const v = call(recover, num("r-dt"), num("r-t"), num("r-seed"));
    plot($("r-canvas"), v.t, [
      { ys: v.b, color: "#999" },
      { ys: v.w, color: "#2e8b57" },
    ], v.o);
    const lines = v.battery.components.map(
      (c) => `  ${c.pass ? "pass" : "FAIL"}  ${c.name}: ${c.statistic.toPrecision(4)}` + (c.p_value == null ? "" : ` (p = ${c.p_value.toPrecision(3)})`)
    );
    $("r-out").textContent =
      `Brownian battery on the recovered W: ${v.battery.report.pass ? "pass" : "FAIL"}\n${lines.join("\n")}\n` +
      `intervals following the auxiliary path: ${v.o.length}, largest W inside them: ${v.max_w_on_o.toPrecision(3)}`;
  });
}

function runCounterexample() {
  guard("c-out", () => {
    const v = call(counterexample, num("c-k"), num("c-lo"), num("c-hi"), 2000);
    const u = v.rows.map((r) => r.u);
    const xa = v.rows.map((r) => r.x_alpha);
    const xb = v.rows.map((r) => r.x_beta);
    const fmax = Math.max(...v.rows.map((r) => Math.abs(r.force)));
    const xmax = Math.max(...xa, ...xb);
    plot($("c-canvas"), u, [
      { ys: v.rows.map((r) => (r.force / fmax) * xmax * 0.5), color: "#888" },
      { ys: xa, color: "#1f6fb4" },
      { ys: xb, color: "#d2691e" },
    ]);
    const gap = Math.max(...xa.map((a, i) => Math.abs(a - xb[i])));
    $("c-out").textContent =
      `both curves solve the impact problem under the same force F = -phi''\n` +
      `largest separation on the window: ${gap.toPrecision(6)}\n` +
      `phi smoothness C^${v.smoothness}, Hermite condition number ${v.condition_number.toExponential(2)}`;
  });
}

await init();
$("p-run").onclick = runPaths;
$("r-run").onclick = runRecover;
$("c-run").onclick = runCounterexample;
runPaths();
runRecover();
runCounterexample();
