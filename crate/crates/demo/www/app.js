import init, { score_curves, contaminated_cloud, beta_trace } from "./pkg/robustmean_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = { psi: "#1f77b4", psi_prime: "#d62728", rho: "#2ca02c", weight: "#9467bd",
  huber: "#1f77b4", catoni: "#ff7f0e", poly: "#2ca02c", mean: "#d62728", gmed: "#9467bd" };

function call(fn, msgId, ...args) {
  const out = JSON.parse(fn(...args));
  $(msgId).textContent = out.error ? out.error : "";
  $(msgId).className = out.error ? "err" : "";
  return out.error ? null : out;
}

function frame(ctx, w, h, xr, yr, log) {
  const pad = 40;
  const tx = (x) => {
    const v = log ? Math.log10(x) : x;
    const [a, b] = log ? [Math.log10(xr[0]), Math.log10(xr[1])] : xr;
    return pad + ((v - a) / (b - a)) * (w - 2 * pad);
  };
  const ty = (y) => h - pad - ((y - yr[0]) / (yr[1] - yr[0])) * (h - 2 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(xr[0].toPrecision(3), pad, h - pad + 14);
  ctx.fillText(xr[1].toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(yr[1].toPrecision(3), 2, pad + 4);
  ctx.fillText(yr[0].toPrecision(3), 2, h - pad);
  return { tx, ty };
}

function line(ctx, xs, ys, tx, ty, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  let started = false;
  xs.forEach((x, i) => {
    if (ys[i] === null || !Number.isFinite(ys[i])) return;
    started ? ctx.lineTo(tx(x), ty(ys[i])) : ctx.moveTo(tx(x), ty(ys[i]));
    started = true;
  });
  ctx.stroke();
}

function drawScores() {
  const beta = num("sc-beta");
  const out = call(score_curves, "sc-msg", $("sc-kind").value, beta, num("sc-p"), 4 * beta, 400);
  if (!out) return;
  const c = $("sc-plot"), ctx = c.getContext("2d");
  const keys = ["psi", "psi_prime", "weight"];
  const ymax = Math.max(...keys.flatMap((k) => out[k]));
  const { tx, ty } = frame(ctx, c.width, c.height, [0, out.x[out.x.length - 1]], [0, ymax * 1.05]);
  keys.forEach((k, i) => {
    line(ctx, out.x, out[k], tx, ty, COLORS[k]);
    ctx.fillStyle = COLORS[k];
    ctx.fillText(k, c.width - 110, 60 + 14 * i);
  });
  ctx.fillStyle = "#444";
  ctx.fillText(`gamma = ${out.gamma}`, c.width - 110, 60 + 14 * keys.length);
}

function drawCloud() {
  const out = call(contaminated_cloud, "cl-msg", num("cl-n"), num("cl-out"), num("cl-ox"), num("cl-oy"),
    num("cl-dof"), num("cl-beta"), BigInt(num("cl-seed")));
  if (!out) return;
  const c = $("cl-plot"), ctx = c.getContext("2d");
  const all = out.x.concat(out.y);
  const lo = Math.min(...all), hi = Math.max(...all);
  const { tx, ty } = frame(ctx, c.width, c.height, [lo, hi], [lo, hi]);
  const outliers = new Set(out.outliers);
  out.x.forEach((x, i) => {
    ctx.fillStyle = outliers.has(i) ? "#b00" : "rgba(0,0,0,0.35)";
    ctx.fillRect(tx(x) - 1.5, ty(out.y[i]) - 1.5, 3, 3);
  });
  const rows = ["<tr><th>estimator</th><th>x</th><th>y</th><th>error</th><th>&beta;</th><th>iterations</th></tr>"];
  for (const e of out.estimates) {
    ctx.strokeStyle = COLORS[e.label];
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(tx(e.point[0]), ty(e.point[1]), 6, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.lineWidth = 1;
    rows.push(`<tr style="color:${COLORS[e.label]}"><td>${e.label}</td><td>${e.point[0].toFixed(3)}</td>` +
      `<td>${e.point[1].toFixed(3)}</td><td>${e.error.toFixed(3)}</td>` +
      `<td>${e.beta === null ? "" : e.beta.toFixed(3)}</td><td>${e.iterations}</td></tr>`);
  }
  $("cl-table").innerHTML = rows.join("");
}

function drawTrace() {
  const out = call(beta_trace, "tr-msg", $("tr-kind").value, num("cl-n"), num("cl-out"), num("cl-ox"),
    num("cl-dof"), num("tr-budget"), BigInt(num("cl-seed")));
  if (!out) return;
  const c = $("tr-plot"), ctx = c.getContext("2d");
  const crit = out.criterion.filter((v) => v !== null);
  const { tx, ty } = frame(ctx, c.width, c.height, [out.beta[0], out.beta[out.beta.length - 1]],
    [Math.min(...crit) * 0.95, Math.max(...crit) * 1.05], true);
  line(ctx, out.beta, out.criterion, tx, ty, "#1f77b4");
  ctx.strokeStyle = "#d62728";
  ctx.beginPath();
  ctx.moveTo(tx(out.beta_hat), 40);
  ctx.lineTo(tx(out.beta_hat), c.height - 40);
  ctx.stroke();
  ctx.fillStyle = "#d62728";
  ctx.fillText(`selected beta = ${out.beta_hat.toPrecision(4)}`, tx(out.beta_hat) + 4, 54);
}

await init();
for (const id of ["sc-kind", "sc-beta", "sc-p"]) $(id).addEventListener("input", drawScores);
for (const id of ["cl-n", "cl-out", "cl-ox", "cl-oy", "cl-dof", "cl-beta", "cl-seed"]) {
  $(id).addEventListener("change", () => { drawCloud(); drawTrace(); });
}
for (const id of ["tr-kind", "tr-budget"]) $(id).addEventListener("change", drawTrace);
drawScores();
drawCloud();
drawTrace();
