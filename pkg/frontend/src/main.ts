/**
 * Browser entry point: mount the app on the page served by the service.
 */

import { startApp } from "./app.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
startApp(root);
