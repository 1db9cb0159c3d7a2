import { describe, expect, it } from 'vitest';

import { decodePng, encodeGrayPng, maskPngBase64 } from './png.js';

// Server-produced fixtures with known quantized samples.
const RGB_FIXTURE =
  'iVBORw0KGgoAAAANSUhEUgAAAAMAAAACCAIAAAASFvFNAAAAGklEQVR4nAXBgQEAIAjAIOxyvXyBEHq3m5gPQvsGgCcXvEUAAAAASUVORK5CYII=';
const GRAY_FIXTURE =
  'iVBORw0KGgoAAAANSUhEUgAAAAQAAAADCAAAAACRn/EaAAAAF0lEQVR4nGNg+M/wn9HBwd6B4T/DfwYAJXQE/ZJxr3gAAAAASUVORK5CYII=';

function b64(text: string): Uint8Array {
  return new Uint8Array(Buffer.from(text, 'base64'));
}

describe('png codec', () => {
  it('decodes a server RGB png', () => {
    const img = decodePng(b64(RGB_FIXTURE));
    expect([img.width, img.height, img.channels]).toEqual([3, 2, 3]);
    expect([...img.data.subarray(0, 9)]).toEqual([255, 0, 0, 0, 255, 0, 0, 0, 255]);
    expect([...img.data.subarray(9, 15)]).toEqual([128, 128, 128, 255, 255, 255]);
  });

  it('decodes a server grayscale png', () => {
    const img = decodePng(b64(GRAY_FIXTURE));
    expect([img.width, img.height, img.channels]).toEqual([4, 3, 1]);
    expect([...img.data]).toEqual([0, 255, 0, 255, 64, 128, 191, 255, 255, 0, 255, 0]);
  });

  it('round-trips an encoded grayscale image', () => {
    const samples = new Uint8Array([0, 255, 10, 20, 128, 30, 40, 50, 255, 0, 0, 7]);
    const png = encodeGrayPng(4, 3, samples);
    const back = decodePng(png);
    expect([back.width, back.height, back.channels]).toEqual([4, 3, 1]);
    expect([...back.data]).toEqual([...samples]);
  });

  it('builds binary mask pngs from a predicate', () => {
    const encoded = maskPngBase64(4, 4, (x, y) => x === y);
    const img = decodePng(b64(encoded));
    for (let y = 0; y < 4; y++) {
      for (let x = 0; x < 4; x++) {
        expect(img.data[y * 4 + x]).toBe(x === y ? 255 : 0);
      }
    }
  });
});
