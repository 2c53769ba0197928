/** Standard base64 with padding, identical in the browser and in node. */

const ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

const REVERSE = (() => {
  const table = new Int16Array(128).fill(-1);
  for (let i = 0; i < ALPHABET.length; i++) {
    table[ALPHABET.charCodeAt(i)] = i;
  }
  return table;
})();

export function toBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const a = bytes[i];
    const b = i + 1 < bytes.length ? bytes[i + 1] : 0;
    const c = i + 2 < bytes.length ? bytes[i + 2] : 0;
    out += ALPHABET[a >> 2] + ALPHABET[((a & 3) << 4) | (b >> 4)];
    out += i + 1 < bytes.length ? ALPHABET[((b & 15) << 2) | (c >> 6)] : "=";
    out += i + 2 < bytes.length ? ALPHABET[c & 63] : "=";
  }
  return out;
}

export function fromBase64(text: string): Uint8Array {
  if (text.length % 4 !== 0) {
    throw new Error("base64 length must be a multiple of 4");
  }
  const pad = text.endsWith("==") ? 2 : text.endsWith("=") ? 1 : 0;
  const out = new Uint8Array((text.length / 4) * 3 - pad);
  let at = 0;
  for (let i = 0; i < text.length; i += 4) {
    const values = [0, 1, 2, 3].map((k) => {
      const ch = text.charCodeAt(i + k);
      if (text[i + k] === "=" && i + k >= text.length - pad) {
        return 0;
      }
      const v = ch < 128 ? REVERSE[ch] : -1;
      if (v < 0) {
        throw new Error(`invalid base64 character ${text[i + k]!}`);
      }
      return v;
    });
    const triple = (values[0] << 18) | (values[1] << 12) | (values[2] << 6) | values[3];
    for (let k = 0; k < 3 && at < out.length; k++) {
      out[at++] = (triple >> (16 - 8 * k)) & 0xff;
    }
  }
  return out;
}
