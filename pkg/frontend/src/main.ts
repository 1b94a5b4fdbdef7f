import { ApiClient } from "./api.js";
import { ExplorerApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const serviceUrl = params.get("service") ?? window.location.origin;

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}

const app = new ExplorerApp(root, new ApiClient(serviceUrl));
void app.init();
