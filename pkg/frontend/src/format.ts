// Metric formatting: 4 decimal places with half-even rounding, character for
// character what the server's report renderer emits, so on-screen numbers
// match the golden report exactly.

export function formatMetric(value: number | null | undefined): string {
  if (value === null || value === undefined) return "";
  if (!isFinite(value)) return String(value);
  return roundHalfEvenFixed(value, 4);
}

// Round the shortest decimal representation of a float64 (which is what both
// this runtime's toString and the server's repr produce) at `places` digits,
// ties to even, and pad to exactly `places` decimals.
export function roundHalfEvenFixed(value: number, places: number): string {
  const negative = value < 0 || Object.is(value, -0);
  let text = Math.abs(value).toString();
  if (text.includes("e") || text.includes("E")) {
    // Scientific notation only appears for magnitudes far outside metric
    // ranges; expand via toFixed with generous precision first.
    text = Math.abs(value).toFixed(places + 16);
  }
  const dot = text.indexOf(".");
  let intPart = dot === -1 ? text : text.slice(0, dot);
  let fracPart = dot === -1 ? "" : text.slice(dot + 1);

  if (fracPart.length <= places) {
    const padded = fracPart.padEnd(places, "0");
    return sign(negative, intPart, padded);
  }

  const kept = fracPart.slice(0, places);
  const rest = fracPart.slice(places);
  const digits = (intPart + kept).split("").map(Number);

  const first = rest.charCodeAt(0) - 48;
  const tieExact = first === 5 && /^0*$/.test(rest.slice(1));
  let roundUp: boolean;
  if (first > 5) roundUp = true;
  else if (first < 5) roundUp = false;
  else if (!tieExact) roundUp = true;
  else roundUp = digits[digits.length - 1] % 2 === 1; // ties to even

  if (roundUp) {
    let i = digits.length - 1;
    while (i >= 0) {
      if (digits[i] === 9) {
        digits[i] = 0;
        i -= 1;
      } else {
        digits[i] += 1;
        break;
      }
    }
    if (i < 0) digits.unshift(1);
  }
  const all = digits.join("");
  const intLen = all.length - places;
  return sign(negative, String(Number(all.slice(0, intLen))), all.slice(intLen));
}

function sign(negative: boolean, intPart: string, fracPart: string): string {
  const body = `${intPart}.${fracPart}`;
  return negative && /[1-9]/.test(intPart + fracPart) ? `-${body}` : body;
}

export function formatPrice(price: string | null, currency: string | null): string {
  if (!price) return "";
  return currency ? `${price} ${currency}` : price;
}
