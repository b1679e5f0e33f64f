import { ApiClient } from "./api.js";
import { BoardState } from "./board.js";
import { BoardController } from "./controller.js";
import { BoardView } from "./dom.js";
import { Poller } from "./poller.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "";

const root = document.getElementById("board");
if (!root) throw new Error("missing #board element");

const api = new ApiClient(baseUrl);
const state = new BoardState();

// the view and controller reference each other through these closures
let view: BoardView | null = null;
const controller = new BoardController(api, state, {
  onError: (message) => view?.toast(message),
  onChange: () => view?.render(),
});
view = new BoardView(root, controller);

const poller = new Poller(() => controller.poll(), {
  intervalMs: 2000,
  onDegraded: (degraded) =>
    view?.showBanner(degraded ? "service unreachable, retrying..." : null),
});

void api
  .templates()
  .then((rows) => view?.setTemplates(rows))
  .catch(() => undefined);

view.renderSettings();
poller.start();
