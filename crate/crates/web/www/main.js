import init, { builtinGrammars, generate, perturb, compareStrategies } from "./pkg/gramdiff_web.js";

const $ = (id) => document.getElementById(id);
const COLOURS = { "directed": "#d1495b", "no-backtrack": "#edae49", "random": "#00798c" };
let current = null;
let step = 0;

function status(msg, isError = false) {
  $("status").textContent = msg;
  $("status").className = isError ? "error" : "";
}

function attempt(f) {
  try {
    f();
    status("");
  } catch (e) {
    status(e.message ?? String(e), true);
  }
}

function show(view) {
  const tokens = view.sentence.split(" ");
  const sentence = $("sentence");
  sentence.replaceChildren(...tokens.flatMap((t, i) => {
    const span = document.createElement("span");
    span.textContent = t;
    if (i === view.changed) span.className = "changed";
    return i ? [" ", span] : [span];
  }));
  $("tree").textContent = view.rendered;
  current = view.tree;
  $("perturb").disabled = false;
}

function plot(curves) {
  const canvas = $("plot");
  const ctx = canvas.getContext("2d");
  const pad = 36;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const maxX = Math.max(...curves.flatMap((c) => c.points.map((p) => p[0])), 1);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText("err_r", 4, pad - 8);
  ctx.fillText("1", pad - 14, pad + 4);
  ctx.fillText("0", pad - 14, pad + h + 4);
  ctx.fillText(`iteration ${maxX}`, pad + w - 80, pad + h + 24);
  for (const c of curves) {
    ctx.strokeStyle = COLOURS[c.strategy];
    ctx.lineWidth = 2;
    ctx.beginPath();
    c.points.forEach(([x, y], i) => {
      const px = pad + (x / maxX) * w;
      const py = pad + (1 - y) * h;
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
  }
  $("legend").replaceChildren(...curves.map((c) => {
    const span = document.createElement("span");
    span.style.color = COLOURS[c.strategy];
    span.textContent = `${c.strategy}: err_r ${c.err_r.toFixed(3)} (${c.n_err}/${c.n_inputs})`;
    return span;
  }));
}

await init();
const bundled = JSON.parse(builtinGrammars());
for (const g of bundled) $("builtin").add(new Option(g.name, g.source));
$("builtin").addEventListener("change", (e) => {
  $("grammar").value = e.target.value;
  $("perturb").disabled = true;
});
$("grammar").value = bundled[0].source;

$("gen").addEventListener("click", () => attempt(() => {
  step = 0;
  show(JSON.parse(generate($("grammar").value, +$("seed").value, +$("depth").value)));
}));

$("perturb").addEventListener("click", () => attempt(() => {
  step += 1;
  show(JSON.parse(perturb($("grammar").value, JSON.stringify(current), +$("seed").value + step)));
}));

$("compare").addEventListener("click", () => {
  status("running...");
  // Let the status line paint before the synchronous run.
  setTimeout(() => attempt(() => {
    plot(JSON.parse(compareStrategies(
      $("grammar").value, $("keywords").value, +$("threshold").value, +$("iterations").value, +$("seed").value,
    )));
  }), 0);
});
