import init, {
  analyze, code_switch, contrastive, example_document, example_dictionary,
} from "./pkg/gimc_web.js";

const $ = (id) => document.getElementById(id);

function escape(s) {
  return String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function table(rows, cols) {
  const head = cols.map((c) => `<th>${c}</th>`).join("");
  const body = rows
    .map((r) => `<tr>${cols.map((c) => `<td>${escape(r[c])}</td>`).join("")}</tr>`)
    .join("");
  return `<table><tr>${head}</tr>${body}</table>`;
}

function guard(target, f) {
  try {
    target.innerHTML = f();
  } catch (e) {
    target.innerHTML = `<p class="err">${escape(e)}</p>`;
  }
}

function runAnalyze() {
  guard($("analysis"), () => {
    const v = JSON.parse(analyze($("doc").value));
    return (
      table(v.phrases, ["sentence", "role", "start", "end", "surface"]) +
      "<p></p>" + table(v.pairs, ["pair", "causal"]) +
      `<pre>${escape(JSON.stringify(v.stats))}</pre>`
    );
  });
}

function runSwitch() {
  guard($("switched"), () => {
    const rows = JSON.parse(
      code_switch($("doc").value, $("dict").value, +$("seed").value, +$("epoch").value),
    );
    return table(rows, ["pair", "original", "switched"]);
  });
}

function angles(id) {
  return Float64Array.from(
    $(id).value.split(",").map((s) => s.trim()).filter((s) => s !== "").map(Number),
  );
}

function runLoss() {
  const tau = +$("tau").value;
  $("tauv").textContent = tau;
  try {
    const v = JSON.parse(contrastive(angles("pos"), angles("neg"), tau));
    $("loss").textContent =
      `loss ${v.loss.toFixed(4)}\n` +
      `cos(pos) ${v.positive_cos.map((x) => x.toFixed(3)).join(" ")}\n` +
      `cos(neg) ${v.negative_cos.map((x) => x.toFixed(3)).join(" ")}\n` +
      `dL/d anchor ${v.d_anchor.map((x) => x.toFixed(4)).join(" ")}`;
  } catch (e) {
    $("loss").textContent = String(e);
  }
}

await init();
$("doc").value = example_document();
$("dict").value = example_dictionary();
$("analyze").onclick = runAnalyze;
$("switch").onclick = runSwitch;
for (const id of ["pos", "neg", "tau"]) $(id).oninput = runLoss;
runAnalyze();
runLoss();
