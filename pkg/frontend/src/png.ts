/**
 * Minimal PNG codec: enough to read the service's artifacts (8-bit RGB and
 * 16-bit grayscale, non-interlaced) and to write test images, without any
 * dependency. Inflate/deflate ride on the platform's DecompressionStream /
 * CompressionStream, which both browsers and node 18+ provide.
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

export interface DecodedPng {
  width: number;
  height: number;
  channels: number;
  depth: 8 | 16;
  /** Row-major samples; Uint16Array when depth is 16. */
  data: Uint8Array | Uint16Array;
}

async function pipe(bytes: Uint8Array, stream: { readable: ReadableStream; writable: WritableStream }): Promise<Uint8Array> {
  const writer = stream.writable.getWriter();
  void writer.write(bytes.slice());
  void writer.close();
  const chunks: Uint8Array[] = [];
  const reader = stream.readable.getReader();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    chunks.push(value as Uint8Array);
  }
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const chunk of chunks) {
    out.set(chunk, offset);
    offset += chunk.length;
  }
  return out;
}

const inflate = (b: Uint8Array) => pipe(b, new DecompressionStream("deflate"));
const deflate = (b: Uint8Array) => pipe(b, new CompressionStream("deflate"));

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export async function decodePng(bytes: Uint8Array): Promise<DecodedPng> {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let pos = 8;
  let width = 0;
  let height = 0;
  let depth: 8 | 16 = 8;
  let colorType = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const length = view.getUint32(pos);
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const body = bytes.subarray(pos + 8, pos + 8 + length);
    if (type === "IHDR") {
      width = view.getUint32(pos + 8);
      height = view.getUint32(pos + 12);
      depth = bytes[pos + 16] as 8 | 16;
      colorType = bytes[pos + 17];
      if (bytes[pos + 20] !== 0) throw new Error("interlaced PNG unsupported");
      if (depth !== 8 && depth !== 16) throw new Error(`bit depth ${depth} unsupported`);
    } else if (type === "IDAT") {
      idat.push(body);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + length;
  }
  const channels = { 0: 1, 2: 3, 4: 2, 6: 4 }[colorType];
  if (channels === undefined) throw new Error(`color type ${colorType} unsupported`);
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let at = 0;
  for (const chunk of idat) {
    compressed.set(chunk, at);
    at += chunk.length;
  }
  const raw = await inflate(compressed);

  const sampleBytes = depth / 8;
  const stride = width * channels * sampleBytes;
  const bpp = channels * sampleBytes;
  const scanlines = new Uint8Array(width * height * channels * sampleBytes);
  let prev: Uint8Array | null = null;
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const line = scanlines.subarray(y * stride, (y + 1) * stride);
    line.set(row);
    for (let x = 0; x < stride; x++) {
      const left = x >= bpp ? line[x - bpp] : 0;
      const up = prev ? prev[x] : 0;
      const corner = prev && x >= bpp ? prev[x - bpp] : 0;
      switch (filter) {
        case 0:
          break;
        case 1:
          line[x] = (line[x] + left) & 0xff;
          break;
        case 2:
          line[x] = (line[x] + up) & 0xff;
          break;
        case 3:
          line[x] = (line[x] + ((left + up) >> 1)) & 0xff;
          break;
        case 4:
          line[x] = (line[x] + paeth(left, up, corner)) & 0xff;
          break;
        default:
          throw new Error(`filter ${filter} unsupported`);
      }
    }
    prev = line;
  }
  if (depth === 8) {
    return { width, height, channels, depth, data: scanlines };
  }
  const data = new Uint16Array(width * height * channels);
  for (let i = 0; i < data.length; i++) {
    data[i] = (scanlines[2 * i] << 8) | scanlines[2 * i + 1];
  }
  return { width, height, channels, depth, data };
}

// ---------------------------------------------------------------------------
// Encoding (filter 0 rows; enough for tests and fixtures)
// ---------------------------------------------------------------------------

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
  for (const b of bytes) {
    c = CRC_TABLE[(c ^ b) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
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

async function encode(
  width: number,
  height: number,
  depth: 8 | 16,
  colorType: number,
  channels: number,
  samples: Uint8Array,
): Promise<Uint8Array> {
  const ihdr = new Uint8Array(13);
  const view = new DataView(ihdr.buffer);
  view.setUint32(0, width);
  view.setUint32(4, height);
  ihdr[8] = depth;
  ihdr[9] = colorType;
  const stride = width * channels * (depth / 8);
  const raw = new Uint8Array(height * (stride + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0;
    raw.set(samples.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const idat = await deflate(raw);
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const part of parts) {
    out.set(part, at);
    at += part.length;
  }
  return out;
}

export function encodePngRgb(data: Uint8Array, width: number, height: number): Promise<Uint8Array> {
  if (data.length !== width * height * 3) throw new Error("rgb size mismatch");
  return encode(width, height, 8, 2, 3, data);
}

export function encodePngGray16(data: Uint16Array, width: number, height: number): Promise<Uint8Array> {
  if (data.length !== width * height) throw new Error("gray16 size mismatch");
  const bytes = new Uint8Array(data.length * 2);
  for (let i = 0; i < data.length; i++) {
    bytes[2 * i] = data[i] >> 8;
    bytes[2 * i + 1] = data[i] & 0xff;
  }
  return encode(width, height, 16, 0, 1, bytes);
}
