import { initialState, layout, reduce, selectMetric } from "./view.js";

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
let state = initialState();
let socket = null;
let queue = [];
let motion = null;

function send(obj) {
  if (socket && socket.readyState === WebSocket.OPEN) socket.send(JSON.stringify({ v: 1, ...obj }));
}

function command(name, extra = {}) {
  send({ type: "Control", command: name, ...extra });
}

function connect() {
  const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  socket = new WebSocket(url);
  socket.onopen = () => {
    // the server resends the session history on connect
    state = initialState();
    $("status").textContent = "connected";
  };
  socket.onmessage = (ev) => {
    for (const line of String(ev.data).split("\n")) if (line.trim()) queue.push(line);
  };
  socket.onclose = () => {
    $("status").textContent = "disconnected, retrying";
    setTimeout(connect, 1000);
  };
}

function draw() {
  const log = $("log");
  for (const line of queue) {
    state = reduce(state, line);
    if (!log.hidden) {
      log.textContent = (line + "\n" + log.textContent).slice(0, 20000);
    }
  }
  queue = [];
  const { width, height } = canvas;
  const g = layout(state, width, height);
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#888";
  ctx.setLineDash([]);
  for (const x of g.separators) {
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, height);
    ctx.stroke();
  }
  if (g.baselineY != null) {
    ctx.strokeStyle = "#d22";
    ctx.setLineDash([8, 6]);
    ctx.beginPath();
    ctx.moveTo(0, g.baselineY);
    ctx.lineTo(width, g.baselineY);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.strokeStyle = "#36c";
  for (const [a, b] of g.segments) {
    ctx.beginPath();
    ctx.moveTo(g.dots[a].x, g.dots[a].y);
    ctx.lineTo(g.dots[b].x, g.dots[b].y);
    ctx.stroke();
  }
  ctx.fillStyle = "#36c";
  for (const d of g.dots) {
    ctx.beginPath();
    ctx.arc(d.x, d.y, 6, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.fillStyle = "#2a2";
  ctx.fillRect(width - 14, g.cursorY - 4, 12, 8);
  $("reps").textContent = String(state.dots.length + (state.liveRep ? 1 : 0));
  $("sets").textContent = String(state.sets);
  $("warnings").textContent = String(state.warnings);
  $("notices").textContent = state.notices.join(" | ");
  $("summary").textContent = state.summary
    ? `session ${state.summary.session}: ${state.summary.reps} reps, ${state.summary.sets} sets, ${state.summary.dropped} dropped`
    : "";
  requestAnimationFrame(draw);
}

// Device motion resampled to 50 Hz and sent as IMU samples.
function startMotion() {
  const latest = { ax: 0, ay: 0, az: 9.81, gx: 0, gy: 0, gz: 0 };
  const onMotion = (e) => {
    const a = e.accelerationIncludingGravity || {};
    const r = e.rotationRate || {};
    Object.assign(latest, { ax: a.x ?? 0, ay: a.y ?? 0, az: a.z ?? 0, gx: r.alpha ?? 0, gy: r.beta ?? 0, gz: r.gamma ?? 0 });
  };
  window.addEventListener("devicemotion", onMotion);
  const t0 = performance.now();
  let n = 0;
  const timer = setInterval(() => {
    const due = Math.floor((performance.now() - t0) / 20);
    for (; n <= due; n += 1) send({ type: "Imu", t: n * 0.02, ...latest });
  }, 20);
  motion = () => {
    clearInterval(timer);
    window.removeEventListener("devicemotion", onMotion);
  };
}

async function liveMode() {
  try {
    if (typeof DeviceMotionEvent !== "undefined" && DeviceMotionEvent.requestPermission) {
      if ((await DeviceMotionEvent.requestPermission()) !== "granted") throw new Error("denied");
    } else if (typeof DeviceMotionEvent === "undefined") {
      throw new Error("unsupported");
    }
    command("start");
    startMotion();
    $("mode").textContent = "live";
  } catch {
    $("mode").textContent = "replay only (motion sensors unavailable)";
  }
}

$("metric").onchange = (e) => {
  state = selectMetric(state, e.target.value);
  command("select_metric", { metric: e.target.value });
};
$("start").onclick = liveMode;
$("stop").onclick = () => {
  if (motion) motion();
  motion = null;
  command("stop");
};
$("reset").onclick = () => command("reset_baseline");
$("toggle-log").onclick = () => ($("log").hidden = !$("log").hidden);

connect();
requestAnimationFrame(draw);
