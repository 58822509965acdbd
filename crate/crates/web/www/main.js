import init, { selection_curve, adversary_trace, trading_experiment } from "./pkg/prot_fpl_web.js";

const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

function num(id) {
  const v = Number(document.getElementById(id).value);
  if (!Number.isFinite(v)) throw new Error(`${id}: not a number`);
  return v;
}

// series: [{xs, ys, color, dash}]; opts.logx plots log10(x).
function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 45;
  ctx.clearRect(0, 0, w, h);
  const tx = opts.logx ? Math.log10 : (x) => x;
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const s of series) {
    s.xs.forEach((x, i) => {
      x0 = Math.min(x0, tx(x)); x1 = Math.max(x1, tx(x));
      y0 = Math.min(y0, s.ys[i]); y1 = Math.max(y1, s.ys[i]);
    });
  }
  if (opts.ymin !== undefined) y0 = Math.min(y0, opts.ymin);
  if (opts.ymax !== undefined) y1 = Math.max(y1, opts.ymax);
  if (y1 === y0) { y1 += 1; y0 -= 1; }
  if (x1 === x0) x1 += 1;
  const px = (x) => pad + ((tx(x) - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad + ((y0 - y) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "12px sans-serif"; ctx.setLineDash([]);
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  ctx.fillText((opts.logx ? "1e" : "") + x0.toPrecision(3), pad, h - pad + 16);
  ctx.fillText((opts.logx ? "1e" : "") + x1.toPrecision(3), w - pad - 30, h - pad + 16);
  if (opts.xlabel) ctx.fillText(opts.xlabel, w / 2, h - 8);

  for (const s of series) {
    ctx.strokeStyle = s.color; ctx.fillStyle = s.color;
    ctx.setLineDash(s.dash ? [6, 4] : []);
    if (s.points) {
      s.xs.forEach((x, i) => { ctx.beginPath(); ctx.arc(px(x), py(s.ys[i]), 4, 0, 2 * Math.PI); ctx.fill(); });
      continue;
    }
    ctx.beginPath();
    s.xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(s.ys[i])) : ctx.moveTo(px(x), py(s.ys[i]))));
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function guard(outId, fn) {
  const out = document.getElementById(outId);
  try {
    out.classList.remove("error");
    fn(out);
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
  }
}

function runProbabilities() {
  guard("p-out", (out) => {
    const cum = document.getElementById("p-cum").value.split(",").map((s) => Number(s.trim()));
    const c = JSON.parse(selection_curve(new Float64Array(cum), num("p-eps"), num("p-samples"), 7n));
    const series = c.probabilities.map((ys, j) => ({ xs: c.eps, ys, color: COLORS[j % COLORS.length] }));
    c.monte_carlo.forEach((p, j) => series.push({ xs: [c.mc_eps], ys: [p], color: COLORS[j % COLORS.length], points: true }));
    plot(document.getElementById("p-canvas"), series, { logx: true, ymin: 0, ymax: 1, xlabel: "eps" });
    document.getElementById("p-legend").innerHTML = cum
      .map((s, j) => `<span style="color:${COLORS[j % COLORS.length]}">expert ${j + 1} (s=${s})</span>`)
      .join("");
    out.textContent = c.exact
      .map((p, j) => `expert ${j + 1}: exact ${p.toFixed(5)}, MC ${c.monte_carlo[j].toFixed(5)}`)
      .join(" | ");
  });
}

function runAdversary() {
  guard("a-out", (out) => {
    const r = JSON.parse(adversary_trace(num("a-eps"), num("a-steps")));
    const ts = r.rows.map((row) => row.t);
    plot(document.getElementById("a-canvas"), [
      { xs: ts, ys: r.rows.map((row) => row.normalized_regret), color: COLORS[3] },
      { xs: ts, ys: r.rows.map((row) => row.p1), color: COLORS[0] },
      { xs: ts, ys: ts.map(() => r.stated_bound), color: "#555", dash: true },
    ], { ymin: 0, ymax: 1, xlabel: "t" });
    const last = r.rows[r.rows.length - 1];
    out.textContent = `fluc(t) = ${r.fluctuation.toFixed(4)} every step; final normalized regret ${last.normalized_regret.toFixed(4)} `
      + `(blue: P{I_t = 1}, red: normalized regret)`;
  });
}

function runTrading() {
  guard("t-out", (out) => {
    const r = JSON.parse(trading_experiment(num("t-h"), num("t-steps"), BigInt(num("t-seed")), num("t-gamma"), num("t-c")));
    const ts = r.rows.map((row) => row.t);
    plot(document.getElementById("t-canvas"), [
      { xs: ts, ys: r.rows.map((row) => row.s1_cum), color: COLORS[0] },
      { xs: ts, ys: r.rows.map((row) => row.s2_cum), color: COLORS[1] },
      { xs: ts, ys: r.rows.map((row) => row.learner_cum), color: COLORS[2] },
      { xs: ts, ys: r.rows.map((row) => row.volume), color: "#777", dash: true },
    ], { xlabel: "t" });
    const last = r.rows[r.rows.length - 1];
    out.textContent = `Learner ${last.learner_cum.toFixed(2)}, expert 1 ${last.s1_cum.toFixed(2)}, volume ${last.volume.toFixed(2)}; `
      + `defensive bound ${r.defensive.lower_bound.toFixed(2)} (${r.defensive.holds ? "holds" : "fails"}); `
      + `steps with fluc > gamma: ${r.fluc_violations.length}`;
  });
}

await init();
document.getElementById("p-run").addEventListener("click", runProbabilities);
document.getElementById("a-run").addEventListener("click", runAdversary);
document.getElementById("t-run").addEventListener("click", runTrading);
runProbabilities();
runAdversary();
runTrading();
