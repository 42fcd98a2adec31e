/** Minimal PNG codec for 8-bit grayscale images.
 *
 * Only what the mask pipeline needs: encode a mask buffer to a PNG the
 * server accepts (color type 0, bit depth 8, no interlace), and decode the
 * same flavor back for tests and round-trip checks. Compression rides on
 * the platform's zlib via CompressionStream / DecompressionStream, which
 * exist in every target browser and in Node 18+.
 */

const PNG_SIGNATURE = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

async function pipeThrough(
  data: Uint8Array,
  transform: CompressionStream | DecompressionStream,
): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(transform);
  return new Uint8Array(await new Response(stream).arrayBuffer());
}

const deflate = (data: Uint8Array) => pipeThrough(data, new CompressionStream("deflate"));
const inflate = (data: Uint8Array) => pipeThrough(data, new DecompressionStream("deflate"));

function writeU32(target: Uint8Array, offset: number, value: number): void {
  target[offset] = (value >>> 24) & 0xff;
  target[offset + 1] = (value >>> 16) & 0xff;
  target[offset + 2] = (value >>> 8) & 0xff;
  target[offset + 3] = value & 0xff;
}

function readU32(bytes: Uint8Array, offset: number): number {
  return (
    ((bytes[offset] << 24) | (bytes[offset + 1] << 16) | (bytes[offset + 2] << 8) | bytes[offset + 3]) >>> 0
  );
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + data.length);
  writeU32(out, 0, data.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(data, 8);
  writeU32(out, 8 + data.length, crc32(out.subarray(4, 8 + data.length)));
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

/** Encode an 8-bit grayscale image. `gray` is row-major, length w*h. */
export async function encodeGrayPng(
  width: number,
  height: number,
  gray: Uint8Array,
): Promise<Uint8Array> {
  if (width < 1 || height < 1 || !Number.isInteger(width) || !Number.isInteger(height)) {
    throw new Error(`bad dimensions ${width}x${height}`);
  }
  if (gray.length !== width * height) {
    throw new Error(`buffer length ${gray.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  writeU32(ihdr, 0, width);
  writeU32(ihdr, 4, height);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // color type: grayscale
  // compression 0, filter 0, interlace 0 already zeroed

  // filter byte 0 (None) before every scanline
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw.set(gray.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const idat = await deflate(raw);
  return concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export interface GrayImage {
  width: number;
  height: number;
  gray: Uint8Array;
}

/** Decode an 8-bit grayscale, non-interlaced PNG (all five filters). */
export async function decodeGrayPng(bytes: Uint8Array): Promise<GrayImage> {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG: bad signature");
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  const idatParts: Uint8Array[] = [];
  let sawIhdr = false;
  while (offset + 12 <= bytes.length) {
    const length = readU32(bytes, offset);
    if (offset + 12 + length > bytes.length) throw new Error("truncated PNG chunk");
    const type = String.fromCharCode(...bytes.subarray(offset + 4, offset + 8));
    const data = bytes.subarray(offset + 8, offset + 8 + length);
    const stored = readU32(bytes, offset + 8 + length);
    if (crc32(bytes.subarray(offset + 4, offset + 8 + length)) !== stored) {
      throw new Error(`corrupt PNG: bad CRC in ${type}`);
    }
    if (type === "IHDR") {
      width = readU32(data, 0);
      height = readU32(data, 4);
      const [depth, color, interlace] = [data[8], data[9], data[12]];
      if (depth !== 8 || color !== 0 || interlace !== 0) {
        throw new Error(`unsupported PNG: depth=${depth} color=${color} interlace=${interlace}`);
      }
      sawIhdr = true;
    } else if (type === "IDAT") {
      idatParts.push(data);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length;
  }
  if (!sawIhdr || idatParts.length === 0) throw new Error("truncated PNG");

  const raw = await inflate(concat(idatParts));
  if (raw.length !== height * (width + 1)) {
    throw new Error(`PNG payload length ${raw.length} != ${height}x(${width}+1)`);
  }
  const gray = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (width + 1)];
    const row = raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1));
    const out = gray.subarray(y * width, (y + 1) * width);
    const prev = y > 0 ? gray.subarray((y - 1) * width, y * width) : null;
    for (let x = 0; x < width; x++) {
      const a = x > 0 ? out[x - 1] : 0;
      const b = prev ? prev[x] : 0;
      const c = x > 0 && prev ? prev[x - 1] : 0;
      let value: number;
      switch (filter) {
        case 0: value = row[x]; break;
        case 1: value = row[x] + a; break;
        case 2: value = row[x] + b; break;
        case 3: value = row[x] + ((a + b) >> 1); break;
        case 4: value = row[x] + paeth(a, b, c); break;
        default: throw new Error(`unsupported PNG filter ${filter}`);
      }
      out[x] = value & 0xff;
    }
  }
  return { width, height, gray };
}
