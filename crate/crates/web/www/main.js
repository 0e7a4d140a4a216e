import init, {
  replay_probabilities,
  replay_draw_counts,
  rule_vocabulary,
  rule_structure,
  rule_satisfaction,
  frozenlake_visitation,
} from "./pkg/nser_web.js";

const $ = (id) => document.getElementById(id);

function fail(el, e) {
  el.textContent = String(e.message ?? e);
  el.className = "error";
}

function drawDistribution() {
  const out = $("dist-out");
  out.className = "";
  const eta = Number($("eta").value);
  $("eta-value").textContent = eta.toFixed(1);
  const scores = $("scores").value.split(",").map((s) => s.trim()).filter(Boolean).map(Number);
  const draws = Math.max(0, Math.floor(Number($("draws").value)));
  try {
    const p = replay_probabilities(Float64Array.from(scores), eta);
    const counts = replay_draw_counts(Float64Array.from(scores), eta, draws, 1);
    const max = Math.max(...p, ...Array.from(counts, (c) => c / Math.max(draws, 1)));
    const bars = $("dist-bars");
    bars.replaceChildren();
    p.forEach((prob, i) => {
      const pair = document.createElement("div");
      pair.className = "pair";
      for (const [v, cls] of [[prob, "bar"], [counts[i] / Math.max(draws, 1), "bar empirical"]]) {
        const b = document.createElement("div");
        b.className = cls;
        b.style.height = `${(100 * v) / max}%`;
        b.title = v.toFixed(4);
        pair.appendChild(b);
      }
      bars.appendChild(pair);
    });
    const entropy = -p.reduce((h, x) => (x > 0 ? h + x * Math.log(x) : h), 0);
    out.textContent =
      p.map((x, i) => `traj ${i}: score ${scores[i]}  p=${x.toFixed(4)}  freq=${(counts[i] / Math.max(draws, 1)).toFixed(4)}`).join("\n") +
      `\nentropy ${entropy.toFixed(4)} nats (uniform ${Math.log(p.length).toFixed(4)})`;
  } catch (e) {
    fail(out, e);
  }
}

let degrees = [];

function evaluateRule() {
  const out = $("rule-out");
  out.className = "";
  try {
    const r = JSON.parse(rule_structure($("rule").value));
    const holder = $("rule-sliders");
    if (degrees.length !== r.conditions.length || holder.childElementCount !== r.conditions.length) {
      degrees = r.conditions.map(() => 0.5);
      holder.replaceChildren();
      r.conditions.forEach((c, i) => {
        const label = document.createElement("label");
        const input = document.createElement("input");
        Object.assign(input, { type: "range", min: 0, max: 1, step: 0.01, value: 0.5 });
        input.addEventListener("input", () => {
          degrees[i] = Number(input.value);
          evaluateRule();
        });
        label.append(`${c.negated ? "NOT " : ""}${c.key} `, input);
        holder.appendChild(label);
      });
    }
    const s = rule_satisfaction($("rule").value, Float64Array.from(degrees));
    out.textContent = [
      r.fol,
      `outcome ${r.outcome}${r.predicts_failure ? " (failure rule)" : ""}`,
      `degrees ${degrees.map((d) => d.toFixed(2)).join(", ")}`,
      `satisfaction ${s.toFixed(4)}`,
    ].join("\n");
  } catch (e) {
    $("rule-sliders").replaceChildren();
    degrees = [];
    fail(out, e);
  }
}

function runLake() {
  const out = $("lake-out");
  out.className = "";
  const bias = Number($("bias").value);
  $("bias-value").textContent = bias.toFixed(2);
  try {
    const v = JSON.parse(
      frozenlake_visitation(
        $("slippery").checked,
        bias,
        Math.max(1, Math.floor(Number($("episodes").value))),
        Math.max(0, Math.floor(Number($("seed").value))),
      ),
    );
    const grid = $("lake");
    grid.style.gridTemplateColumns = `repeat(${v.ncol}, 64px)`;
    grid.replaceChildren();
    const max = Math.max(...v.visits, 1);
    v.visits.forEach((n, i) => {
      const cell = document.createElement("div");
      cell.className = "cell";
      const t = Math.sqrt(n / max);
      cell.style.background = v.cells[i] === "hole" ? "#333" : `rgba(74, 123, 208, ${0.08 + 0.92 * t})`;
      cell.style.color = v.cells[i] === "hole" || t > 0.6 ? "#fff" : "#222";
      cell.innerHTML = `<b>${v.cells[i]}</b><span>${n}</span>`;
      grid.appendChild(cell);
    });
    const total = v.success + v.failure + v.timeout;
    out.textContent = `success ${v.success}/${total}  failure ${v.failure}  timeout ${v.timeout}`;
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("status").textContent = "";
$("vocab").textContent = rule_vocabulary().join("\n");
for (const id of ["scores", "eta", "draws"]) $(id).addEventListener("input", drawDistribution);
$("rule").addEventListener("input", evaluateRule);
for (const id of ["slippery", "bias", "episodes", "seed"]) $(id).addEventListener("input", runLake);
drawDistribution();
evaluateRule();
runLake();
