// View state for the connect-the-dots game. Pure functions only, so the
// same code runs in the browser and under `node --test`.

export const METRICS = ["distance", "duration", "velocity"];

export function initialState() {
  return {
    metric: "distance",
    baseline: null,
    // finalized reps in arrival order: { set_index, rep_index, rep }
    dots: [],
    // dot counts at each SetEnded
    separators: [],
    cursor: 0,
    liveRep: null,
    sets: 0,
    warnings: 0,
    summary: null,
    open: false,
    notices: [],
  };
}

export function metricValue(rep, metric) {
  const m = rep.metrics;
  switch (metric) {
    case "duration":
      return m.duration;
    case "velocity":
      return m.mean_velocity;
    default:
      return m.range_of_motion;
  }
}

function bad(s) {
  s.warnings += 1;
  return s;
}

// Applies one server line (string or parsed object) to the state.
export function reduce(s, line) {
  let msg = line;
  if (typeof line === "string") {
    try {
      msg = JSON.parse(line);
    } catch {
      return bad(s);
    }
  }
  if (!msg || typeof msg !== "object" || msg.v !== 1 || typeof msg.type !== "string") {
    return bad(s);
  }
  switch (msg.type) {
    case "OrientationUpdate":
      s.cursor = Math.min(1, Math.max(0, Number(msg.position) || 0));
      break;
    case "SetStarted":
      s.liveRep = null;
      break;
    case "SetEnded":
      s.separators.push(s.dots.length);
      s.sets += 1;
      s.liveRep = null;
      break;
    case "RepDetected":
      s.liveRep = { rep_index: msg.rep_index, value: msg.value };
      break;
    case "RepFinalized":
      if (!msg.rep || !msg.rep.metrics) return bad(s);
      s.dots.push({ set_index: msg.rep.set_index, rep_index: msg.rep.rep_index, rep: msg.rep });
      s.liveRep = null;
      break;
    case "RepRetracted": {
      const i = s.dots.findIndex((d) => d.set_index === msg.set_index && d.rep_index === msg.rep_index);
      if (i >= 0) {
        s.dots.splice(i, 1);
        s.separators = s.separators.map((n) => (n > i ? n - 1 : n));
      }
      break;
    }
    case "BaselineSet":
      s.baseline = msg.value;
      if (METRICS.includes(msg.metric)) s.metric = msg.metric;
      break;
    case "BaselineCleared":
      s.baseline = null;
      break;
    case "ControlAck":
      s.open = !!msg.status.open;
      if (METRICS.includes(msg.status.metric)) s.metric = msg.status.metric;
      if (msg.command === "start") {
        const keep = { metric: s.metric, warnings: s.warnings };
        Object.assign(s, initialState(), keep, { open: true });
      }
      break;
    case "SessionSummary":
      s.summary = msg;
      s.open = false;
      break;
    case "Rejected":
    case "Error":
      s.notices.push(msg.reason || msg.message || "rejected");
      if (s.notices.length > 5) s.notices.shift();
      break;
    case "SampleAck":
      break;
    default:
      return bad(s);
  }
  return s;
}

// Switching metric is a view transform: stored reps are re-plotted.
export function selectMetric(s, metric) {
  if (METRICS.includes(metric)) s.metric = metric;
  return s;
}

// Screen geometry for the current state. The y axis spans 0 to 1.5x the
// baseline, or the largest value when that is higher.
export function layout(s, width, height) {
  const values = s.dots.map((d) => metricValue(d.rep, s.metric));
  const top = Math.max(1.5 * (s.baseline ?? 0), ...values, 1e-9);
  const n = Math.max(s.dots.length + s.separators.length, 1);
  const step = width / (n + 1);
  const y = (v) => height - (v / top) * height;
  const dots = [];
  const separators = [];
  let sep = 0;
  let x = step;
  s.dots.forEach((d, i) => {
    while (sep < s.separators.length && s.separators[sep] === i) {
      separators.push(x);
      x += step;
      sep += 1;
    }
    dots.push({ x, y: y(values[i]), set_index: d.set_index, rep_index: d.rep_index, value: values[i] });
    x += step;
  });
  for (; sep < s.separators.length; sep += 1) {
    separators.push(x);
    x += step;
  }
  const segments = [];
  for (let i = 1; i < dots.length; i += 1) {
    const crossed = s.separators.includes(i);
    if (!crossed && dots[i].set_index === dots[i - 1].set_index) segments.push([i - 1, i]);
  }
  return {
    dots,
    segments,
    separators,
    baselineY: s.baseline == null ? null : y(s.baseline),
    cursorY: height - s.cursor * height,
  };
}
