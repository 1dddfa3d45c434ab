// Minimal PNG codec for sketch rasters. Encoding writes 8-bit grayscale
// (ink = black 0, blank = white 255, filter 0); decoding accepts 8-bit
// grayscale / RGB / RGBA, applies all five scanline filters, and thresholds
// luminance < 128 back to ink — the same convention the service uses.
// Compression rides on CompressionStream("deflate"), the zlib framing IDAT
// expects, which exists in browsers and in Node without any dependency.

import { Raster, emptyRaster } from "./raster";

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

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

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function concat(parts: Uint8Array[]): Uint8Array<ArrayBuffer> {
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

async function pipeThrough(
  data: Uint8Array<ArrayBuffer>,
  stream: CompressionStream | DecompressionStream,
): Promise<Uint8Array<ArrayBuffer>> {
  const chunks: Uint8Array[] = [];
  const reading = (async () => {
    const reader = stream.readable.getReader();
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      chunks.push(value);
    }
  })();
  const writer = stream.writable.getWriter();
  await writer.write(data);
  await writer.close();
  await reading;
  return concat(chunks);
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + body.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, body.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(body, 8);
  view.setUint32(8 + body.length, crc32(out.subarray(4, 8 + body.length)));
  return out;
}

export async function encodeRasterPng(raster: Raster): Promise<Uint8Array> {
  const size = raster.size;
  const ihdr = new Uint8Array(13);
  const view = new DataView(ihdr.buffer);
  view.setUint32(0, size);
  view.setUint32(4, size);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale

  const scanlines = new Uint8Array(size * (size + 1));
  for (let y = 0; y < size; y++) {
    const at = y * (size + 1);
    scanlines[at] = 0; // filter: none
    for (let x = 0; x < size; x++) {
      scanlines[at + 1 + x] = raster.data[y * size + x] ? 0 : 255;
    }
  }
  const idat = await pipeThrough(scanlines, new CompressionStream("deflate"));
  return concat([
    new Uint8Array(SIGNATURE),
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
  return pb <= pc ? b : c;
}

function unfilter(raw: Uint8Array, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  if (raw.length < (stride + 1) * height) {
    throw new Error("PNG pixel data is truncated");
  }
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, y * (stride + 1) + 1 + stride);
    const curAt = y * stride;
    const prevAt = curAt - stride;
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? out[curAt + x - bpp] : 0;
      const b = y > 0 ? out[prevAt + x] : 0;
      const c = x >= bpp && y > 0 ? out[prevAt + x - bpp] : 0;
      let v = row[x];
      switch (filter) {
        case 0:
          break;
        case 1:
          v = (v + a) & 0xff;
          break;
        case 2:
          v = (v + b) & 0xff;
          break;
        case 3:
          v = (v + ((a + b) >> 1)) & 0xff;
          break;
        case 4:
          v = (v + paeth(a, b, c)) & 0xff;
          break;
        default:
          throw new Error(`unsupported PNG filter type ${filter}`);
      }
      out[curAt + x] = v;
    }
  }
  return out;
}

export async function decodeRasterPng(bytes: Uint8Array): Promise<Raster> {
  if (bytes.length < 8 || SIGNATURE.some((v, i) => bytes[i] !== v)) {
    throw new Error("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idats: Uint8Array[] = [];
  let at = 8;
  while (at + 8 <= bytes.length) {
    const length = view.getUint32(at);
    const type = String.fromCharCode(bytes[at + 4], bytes[at + 5], bytes[at + 6], bytes[at + 7]);
    const body = bytes.subarray(at + 8, at + 8 + length);
    if (type === "IHDR") {
      width = view.getUint32(at + 8);
      height = view.getUint32(at + 12);
      const bitDepth = bytes[at + 16];
      colorType = bytes[at + 17];
      const interlace = bytes[at + 20];
      if (bitDepth !== 8) throw new Error(`unsupported PNG bit depth ${bitDepth}`);
      if (colorType !== 0 && colorType !== 2 && colorType !== 6) {
        throw new Error(`unsupported PNG color type ${colorType}`);
      }
      if (interlace !== 0) throw new Error("interlaced PNG is not supported");
    } else if (type === "IDAT") {
      idats.push(body);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  if (width === 0 || height === 0 || colorType < 0) {
    throw new Error("PNG has no IHDR chunk");
  }
  if (width !== height) {
    throw new Error(`sketch PNG must be square, got ${width}x${height}`);
  }
  if (idats.length === 0) throw new Error("PNG has no IDAT chunk");

  const raw = await pipeThrough(concat(idats), new DecompressionStream("deflate"));
  const bpp = colorType === 0 ? 1 : colorType === 2 ? 3 : 4;
  const pixels = unfilter(raw, width, height, bpp);
  const raster = emptyRaster(width);
  for (let i = 0; i < width * height; i++) {
    const p = i * bpp;
    const lum =
      bpp === 1
        ? pixels[p]
        : (299 * pixels[p] + 587 * pixels[p + 1] + 114 * pixels[p + 2]) / 1000;
    raster.data[i] = lum < 128 ? 1 : 0;
  }
  return raster;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const step = 0x8000;
  for (let i = 0; i < bytes.length; i += step) {
    binary += String.fromCharCode(...bytes.subarray(i, i + step));
  }
  return btoa(binary);
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
