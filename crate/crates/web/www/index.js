import init, { Demo, trust_percent, kappa_json } from "./pkg/drgrade_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let demo = null;

function draw(canvas, rgba, w, h) {
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function guarded(out, fn) {
  return () => {
    out.classList.remove("err");
    try {
      fn();
    } catch (e) {
      out.classList.add("err");
      out.textContent = String(e);
    }
  };
}

function generate() {
  demo?.free();
  demo = new Demo(num("seed"), num("grade"), num("size"));
  draw($("original"), demo.original_rgba(), demo.width(), demo.height());
  preprocess();
  stage();
}

function preprocess() {
  draw($("processed"), demo.preprocess_rgba(num("clip"), num("sigma"), $("normalize").checked), demo.width(), demo.height());
}

function threshold() {
  return $("otsu").checked ? -1 : num("threshold");
}

function stage() {
  const r = JSON.parse(demo.stage_json(threshold(), num("minArea")));
  draw($("overlay"), demo.overlay_rgba(threshold()), demo.width(), demo.height());
  const rows = r.lesions.map(
    (l) => `${l.kind.padEnd(4)} t=${l.threshold.toFixed(3)}  ${String(l.components).padStart(3)} lesions  quadrants ${l.quadrant_counts.join("/")}`,
  );
  $("stageOut").textContent = `${r.five_level} -> ${r.three_level}\n${r.reason}\n\n${rows.join("\n")}`;
}

function trust() {
  const pct = trust_percent(num("q"), num("f1"), num("conf"), num("wq"), num("wf"), num("wc"));
  $("trustOut").textContent = `trust ${pct}%`;
}

function kappa() {
  const k = JSON.parse(kappa_json(num("yy"), num("yn"), num("ny"), num("nn")));
  $("kappaOut").textContent = `kappa ${k.kappa.toFixed(4)}  (P_o ${k.p_o.toFixed(4)}, P_e ${k.p_e.toFixed(4)})\n${k.band}`;
}

await init();
$("generate").onclick = guarded($("stageOut"), generate);
$("preprocess").onclick = guarded($("stageOut"), preprocess);
$("stage").onclick = guarded($("stageOut"), stage);
$("trust").onclick = guarded($("trustOut"), trust);
$("kappa").onclick = guarded($("kappaOut"), kappa);
guarded($("stageOut"), generate)();
trust();
kappa();
