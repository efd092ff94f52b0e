import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    environment: 'node',
    // the round-trip suite spawns the Python service; give setup headroom
    hookTimeout: 60000,
  },
});
