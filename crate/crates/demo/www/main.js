import init, { sample_road, explore_locatability, parse_answer, f1 } from "./pkg/geocurate_demo.js";

await init();

const $ = (id) => document.getElementById(id);

// ---- road sampling

const BOX = { north: -33.35, south: -33.55, west: -70.80, east: -70.45 };
const canvas = $("map");
const ctx = canvas.getContext("2d");
let road = [];

const toXY = ([lat, lon]) => [
  ((lon - BOX.west) / (BOX.east - BOX.west)) * canvas.width,
  ((BOX.north - lat) / (BOX.north - BOX.south)) * canvas.height,
];
const toLatLon = (x, y) => [
  BOX.north - (y / canvas.height) * (BOX.north - BOX.south),
  BOX.west + (x / canvas.width) * (BOX.east - BOX.west),
];

function arrow(x, y, headingDeg, length, colour) {
  const a = (headingDeg * Math.PI) / 180;
  ctx.strokeStyle = colour;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x, y);
  ctx.lineTo(x + Math.sin(a) * length, y - Math.cos(a) * length);
  ctx.stroke();
}

function drawRoad() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  $("road-error").textContent = "";
  if (road.length === 0) {
    $("road-stats").textContent = "No road yet.";
    return;
  }
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 3;
  ctx.beginPath();
  road.map(toXY).forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
  ctx.stroke();
  if (road.length < 2) {
    $("road-stats").textContent = "Add another point.";
    return;
  }
  let result;
  try {
    result = JSON.parse(sample_road(JSON.stringify(road), Number($("interval").value), BigInt($("seed").value || 0)));
  } catch (e) {
    $("road-error").textContent = String(e);
    return;
  }
  for (const s of result.samples) {
    const [x, y] = toXY([s.lat, s.lon]);
    arrow(x, y, s.lateral_heading, 14, "#2463c7");
    arrow(x, y, s.axial_heading, 14, "#e07b00");
    ctx.fillStyle = "#222";
    ctx.beginPath();
    ctx.arc(x, y, 3.5, 0, 2 * Math.PI);
    ctx.fill();
  }
  const views = result.samples.map((s) => `${s.lateral}/${s.axial}`);
  $("road-stats").innerHTML =
    `Length ${(result.length_m / 1000).toFixed(2)} km<br>${result.samples.length} samples<br>` +
    `Views: ${views.slice(0, 8).join(", ")}${views.length > 8 ? ", ..." : ""}`;
}

canvas.addEventListener("click", (ev) => {
  const r = canvas.getBoundingClientRect();
  road.push(toLatLon(ev.clientX - r.left, ev.clientY - r.top));
  drawRoad();
});
$("clear").addEventListener("click", () => {
  road = [];
  drawRoad();
});
$("interval").addEventListener("input", drawRoad);
$("seed").addEventListener("input", drawRoad);
drawRoad();

// ---- locatability explorer

const LABELS = ["building", "sky", "road", "vegetation", "vehicle", "sign", "pole", "sidewalk"];
// cosine similarities of five clues against the labels
const SIMILARITY = [
  [0.62, 0.08, 0.21, 0.15, 0.05, 0.33, 0.12, 0.18],
  [0.31, 0.04, 0.18, 0.09, 0.07, 0.58, 0.22, 0.11],
  [0.55, 0.12, 0.10, 0.28, 0.03, 0.19, 0.06, 0.14],
  [0.20, 0.06, 0.47, 0.11, 0.26, 0.30, 0.35, 0.29],
  [0.48, 0.02, 0.14, 0.41, 0.05, 0.24, 0.09, 0.12],
];
const ratios = [0.3, 0.25, 0.2, 0.1, 0.05, 0.03, 0.02, 0.05];

function bar(value, scale) {
  const span = document.createElement("span");
  span.className = "bar";
  span.style.width = `${Math.round(value * scale)}px`;
  return span;
}

function buildRatioSliders() {
  const box = $("ratios");
  LABELS.forEach((name, i) => {
    const row = document.createElement("div");
    const label = document.createElement("span");
    label.className = "name";
    label.textContent = name;
    const slider = document.createElement("input");
    Object.assign(slider, { type: "range", min: 0, max: 1, step: 0.01, value: ratios[i] });
    const out = document.createElement("span");
    out.textContent = ratios[i].toFixed(2);
    slider.addEventListener("input", () => {
      ratios[i] = Number(slider.value);
      out.textContent = ratios[i].toFixed(2);
      explore();
    });
    row.append(label, slider, out);
    box.append(row);
  });
}

function explore() {
  const tau = Number($("tau").value);
  $("tau-value").textContent = tau.toFixed(2);
  const box = $("weights");
  box.replaceChildren();
  $("explore-error").textContent = "";
  let result;
  try {
    result = JSON.parse(explore_locatability(JSON.stringify(SIMILARITY), tau, JSON.stringify(ratios)));
  } catch (e) {
    $("score").textContent = "-";
    $("explore-error").textContent = String(e);
    return;
  }
  result.weights.forEach((w, i) => {
    const row = document.createElement("div");
    const name = document.createElement("span");
    name.className = "name";
    name.textContent = LABELS[i];
    const value = document.createElement("span");
    value.textContent = w.toFixed(3);
    row.append(name, bar(w, 200), value);
    box.append(row);
  });
  $("score").textContent = result.score.toFixed(4);
}

buildRatioSliders();
$("tau").addEventListener("input", explore);
explore();

// ---- answer parsing

function parse() {
  $("parsed").textContent = JSON.stringify(JSON.parse(parse_answer($("answer").value)), null, 2);
}
function updateF1() {
  $("f1").textContent = f1(Number($("acc").value), Number($("rec").value)).toFixed(4);
}
$("parse").addEventListener("click", parse);
$("refusal").addEventListener("click", () => {
  $("answer").value = "I'm sorry, I can't provide assistance with that request.";
  parse();
});
$("acc").addEventListener("input", updateF1);
$("rec").addEventListener("input", updateF1);
parse();
updateF1();
