import { StudyApi } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = new App(root, new StudyApi(base));
const style = params.get("style");
const mode = params.get("mode");
app.start(style && mode ? { style, mode } : undefined).catch((err) => {
  root.textContent = `Could not reach the study service at ${base}: ${err}`;
});
