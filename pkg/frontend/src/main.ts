/** Entry point: wire the controller to the page and the service origin. */

import { ConsoleApi } from "./api.js";
import { ConsoleController } from "./console.js";
import { render } from "./render.js";

export function initConsole(root: HTMLElement, api: ConsoleApi): ConsoleController {
  const controller = new ConsoleController(api, () => render(root, controller));
  render(root, controller);
  void controller.init();
  return controller;
}

const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  initConsole(mount, new ConsoleApi(""));
}
