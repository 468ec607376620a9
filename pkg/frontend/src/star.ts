/** Five-star rating widget; the only values it can produce are 1..5. */

export interface StarWidget {
  el: HTMLElement;
  value: () => number | null;
  set: (v: number) => void;
}

export function starWidget(itemId: string, onChange?: (v: number) => void): StarWidget {
  const el = document.createElement("span");
  el.className = "stars";
  el.dataset.item = itemId;
  let current: number | null = null;

  const buttons: HTMLButtonElement[] = [];
  for (let v = 1; v <= 5; v++) {
    const b = document.createElement("button");
    b.type = "button";
    b.className = "star";
    b.dataset.value = String(v);
    b.textContent = "☆";
    b.setAttribute("aria-label", `${v} star${v > 1 ? "s" : ""}`);
    b.addEventListener("click", () => {
      set(v);
      onChange?.(v);
    });
    buttons.push(b);
    el.appendChild(b);
  }

  function set(v: number): void {
    if (!Number.isInteger(v) || v < 1 || v > 5) return;
    current = v;
    buttons.forEach((b, i) => {
      b.textContent = i < v ? "★" : "☆";
      b.classList.toggle("on", i < v);
    });
  }

  return { el, value: () => current, set };
}
