/**
 * Binary PGM (P5) parsing for the face-login upload.
 *
 * Operators upload a pre-cropped grayscale face (the aligned-crop files
 * the trainer writes); the crop goes to the gateway as a flat array of
 * unit-range values.
 */

export interface PgmImage {
  width: number;
  height: number;
  /** Row-major pixel values scaled to [0, 1]. */
  values: number[];
}

export function parsePgm(data: Uint8Array): PgmImage {
  let pos = 0;

  function skipSpaceAndComments(): void {
    while (pos < data.length) {
      const c = data[pos];
      if (c === 0x23) {
        // '#' comment to end of line
        while (pos < data.length && data[pos] !== 0x0a) pos += 1;
      } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
        pos += 1;
      } else {
        break;
      }
    }
  }

  function readToken(): string {
    skipSpaceAndComments();
    const start = pos;
    while (pos < data.length && !isSpace(data[pos])) pos += 1;
    if (start === pos) throw new Error('truncated PGM header');
    return String.fromCharCode(...data.slice(start, pos));
  }

  function isSpace(c: number): boolean {
    return c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d;
  }

  const magic = readToken();
  if (magic !== 'P5') {
    throw new Error(`not a binary PGM (expected P5, got ${magic})`);
  }
  const width = parseInt(readToken(), 10);
  const height = parseInt(readToken(), 10);
  const maxval = parseInt(readToken(), 10);
  if (!Number.isFinite(width) || !Number.isFinite(height) || width <= 0 || height <= 0) {
    throw new Error('bad PGM dimensions');
  }
  if (maxval !== 255) {
    throw new Error(`only maxval 255 supported, got ${maxval}`);
  }
  pos += 1; // single whitespace byte after maxval
  const need = width * height;
  if (data.length - pos < need) {
    throw new Error(`PGM pixel data truncated: want ${need}, got ${data.length - pos}`);
  }
  const values = new Array<number>(need);
  for (let i = 0; i < need; i += 1) {
    values[i] = data[pos + i] / 255;
  }
  return { width, height, values };
}
