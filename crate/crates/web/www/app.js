import init, { fibering_curve, operator_profile, simulate } from "./pkg/kirchwell_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];

function draw(canvas, xs, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const fx = opts.logX ? Math.log10 : (x) => x;
  const X = xs.map(fx);
  const all = series.flatMap((s) => s.y).filter(Number.isFinite);
  let lo = Math.min(...all), hi = Math.max(...all);
  if (opts.clip) { lo = Math.max(lo, opts.clip[0]); hi = Math.min(hi, opts.clip[1]); }
  if (hi <= lo) { hi = lo + 1; }
  const x0 = Math.min(...X), x1 = Math.max(...X);
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  if (lo < 0 && hi > 0) {
    ctx.beginPath(); ctx.moveTo(pad, py(0)); ctx.lineTo(w - pad, py(0)); ctx.stroke();
  }
  ctx.font = "12px sans-serif";
  ctx.fillStyle = "#333";
  ctx.fillText(hi.toPrecision(3), 2, pad + 4);
  ctx.fillText(lo.toPrecision(3), 2, h - pad);
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    let pen = false;
    s.y.forEach((y, i) => {
      const yy = Math.min(Math.max(y, lo), hi);
      if (!Number.isFinite(y)) { pen = false; return; }
      if (pen) ctx.lineTo(px(X[i]), py(yy)); else ctx.moveTo(px(X[i]), py(yy));
      pen = true;
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.name, pad + 8, pad + 16 + 14 * k);
  });
  if (opts.marker !== undefined && opts.marker !== null) {
    ctx.strokeStyle = "#ff7f0e";
    ctx.setLineDash([5, 4]);
    ctx.beginPath(); ctx.moveTo(px(fx(opts.marker)), pad); ctx.lineTo(px(fx(opts.marker)), h - pad); ctx.stroke();
    ctx.setLineDash([]);
  }
}

function wire(button, status, job) {
  document.getElementById(button).addEventListener("click", () => {
    const el = document.getElementById(status);
    try {
      const t0 = performance.now();
      el.textContent = job() + ` (${(performance.now() - t0).toFixed(0)} ms)`;
    } catch (e) {
      el.textContent = "error: " + (e.message || e);
    }
  });
}

const val = (id) => document.getElementById(id).value;
const num = (id) => Number(val(id));

await init();

wire("fib-run", "fib-status", () => {
  const r = JSON.parse(fibering_curve(val("fib-u"), val("fib-v"), 48, 0.05, num("fib-max"), 300));
  const peak = Math.max(...r.phi.map(Math.abs));
  draw(document.getElementById("fib-canvas"), r.eps,
    [{ name: "phi", y: r.phi }, { name: "psi (consistent)", y: r.psi_consistent }],
    { logX: true, marker: r.eps_star, clip: [-2 * peak, 2 * peak] });
  return r.eps_star === null ? "eps* not bracketed in the scan" : `eps* = ${r.eps_star.toFixed(5)}`;
});

wire("op-run", "op-status", () => {
  const r = JSON.parse(operator_profile(val("op-profile"), 1.0, num("op-p"), num("op-s"), num("op-nodes")));
  const scale = Math.max(...r.lu.map(Math.abs)) || 1;
  draw(document.getElementById("op-canvas"), r.x,
    [{ name: "u", y: r.u }, { name: "Lu (rescaled)", y: r.lu.map((v) => v / scale) }]);
  return `bracket = ${r.bracket.toPrecision(6)}, max |Lu| = ${scale.toPrecision(4)}`;
});

wire("sim-run", "sim-status", () => {
  const r = JSON.parse(simulate(val("sim-profile"), num("sim-amp"), num("sim-t"), 32));
  draw(document.getElementById("sim-canvas"), r.t,
    [{ name: "phi", y: r.phi }, { name: "||u||^2+||v||^2", y: r.l2sq }]);
  const bound = r.t_max_bound === null ? "none" : r.t_max_bound.toPrecision(4);
  return `${r.verdict}: ${r.outcome} at t = ${r.t_stop.toPrecision(4)}, blow-up time bound ${bound}`;
});
