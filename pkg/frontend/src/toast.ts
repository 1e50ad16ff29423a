// Non-blocking error toasts: stacked, self-dismissing, never modal.

const TOAST_MS = 4000;

export function pushToast(message: string, container?: HTMLElement): HTMLElement {
  let host = container ?? document.getElementById("toasts");
  if (!host) {
    host = document.createElement("div");
    host.id = "toasts";
    document.body.appendChild(host);
  }
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  host.appendChild(el);
  setTimeout(() => el.remove(), TOAST_MS);
  return el;
}
