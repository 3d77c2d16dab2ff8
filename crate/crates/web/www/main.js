import init, { DropDemo, shadow_preview, fitTone, applyTone } from "./pkg/physcene_web.js";

const $ = (id) => document.getElementById(id);

function dropView() {
  const canvas = $("drop-canvas");
  const ctx = canvas.getContext("2d");
  const scale = canvas.width / 2;
  let demo = null;
  let running = false;

  const modulus = () => Math.pow(10, Number($("E").value));
  const showModulus = () => ($("E-val").textContent = modulus().toExponential(1));
  $("E").addEventListener("input", showModulus);
  showModulus();

  function draw() {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const floorY = canvas.height - demo.floor() * scale;
    ctx.fillStyle = "#ccc";
    ctx.fillRect(0, floorY, canvas.width, canvas.height - floorY);
    const p = demo.positions();
    ctx.fillStyle = "rgba(200, 70, 50, 0.35)";
    for (let i = 0; i < p.length; i += 2) {
      ctx.fillRect(p[i] * scale - 1, canvas.height - p[i + 1] * scale - 1, 2, 2);
    }
    $("drop-info").textContent =
      `t = ${demo.time().toFixed(3)} s, max speed ${demo.max_speed().toFixed(2)} m/s`;
  }

  function tick() {
    if (!running) return;
    try {
      demo.frame();
    } catch (e) {
      running = false;
      $("drop-info").textContent = String(e);
      return;
    }
    draw();
    if (demo.time() < 1.5) requestAnimationFrame(tick);
    else running = false;
  }

  $("drop").addEventListener("click", () => {
    try {
      demo = new DropDemo(modulus(), Number($("k").value), Number($("vx").value));
    } catch (e) {
      $("drop-info").textContent = String(e);
      return;
    }
    draw();
    if (!running) {
      running = true;
      requestAnimationFrame(tick);
    }
  });
}

function shadowView() {
  const canvas = $("shadow-canvas");
  const ctx = canvas.getContext("2d");
  let pending = false;
  const render = () => {
    pending = false;
    const rgba = shadow_preview(canvas.width, Number($("az").value), Number($("el").value), Number($("amb").value));
    ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), canvas.width, canvas.height), 0, 0);
  };
  for (const id of ["az", "el", "amb"]) {
    $(id).addEventListener("input", () => {
      if (!pending) {
        pending = true;
        requestAnimationFrame(render);
      }
    });
  }
  render();
}

function toneView() {
  const canvas = $("tone-canvas");
  const ctx = canvas.getContext("2d");
  const n = canvas.width;
  const px = (x, y) => [x * (n - 1), (1 - y) * (n - 1)];

  $("fit").addEventListener("click", () => {
    const xs = [];
    const ys = [];
    for (const line of $("pairs").value.split("\n")) {
      const [x, y] = line.trim().split(/[\s,]+/).map(Number);
      if (Number.isFinite(x) && Number.isFinite(y)) {
        xs.push(x);
        ys.push(y);
      }
    }
    let abc;
    try {
      abc = fitTone(Float64Array.from(xs), Float64Array.from(ys));
    } catch (e) {
      $("fit-info").textContent = String(e);
      return;
    }
    const [a, b, c] = abc;
    $("fit-info").textContent = `a = ${a.toFixed(4)}, b = ${b.toFixed(4)}, c = ${c.toFixed(4)}`;

    ctx.clearRect(0, 0, n, n);
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.moveTo(...px(0, 0));
    ctx.lineTo(...px(1, 1));
    ctx.stroke();
    const grid = Float64Array.from({ length: 101 }, (_, i) => i / 100);
    const curve = applyTone(a, b, grid);
    ctx.strokeStyle = "#2a6";
    ctx.lineWidth = 2;
    ctx.beginPath();
    grid.forEach((x, i) => (i ? ctx.lineTo(...px(x, curve[i])) : ctx.moveTo(...px(x, curve[i]))));
    ctx.stroke();
    ctx.fillStyle = "#c33";
    xs.forEach((x, i) => {
      const [u, v] = px(x, ys[i]);
      ctx.fillRect(u - 2, v - 2, 5, 5);
    });
  });
  $("fit").click();
}

init().then(() => {
  $("status").textContent = "";
  dropView();
  shadowView();
  toneView();
});
