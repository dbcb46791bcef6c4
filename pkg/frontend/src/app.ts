/**
 * Annotator application: slice viewer with three views, class-coded brush
 * painting committed as stroke deltas, segmentation launch with progress,
 * overlay inspection and a metrics panel.  All server state flows through
 * the SessionClient.
 */

import { ApiRequestError, SessionClient } from './api';
import {
  classesPresent,
  mergeLocal,
  missingClasses,
  strokeToVoxels,
  type BrushStroke,
} from './brush';
import { runAndWatch } from './polling';
import {
  TISSUE_CLASSES,
  type Axis,
  type MetricsReport,
  type PipelineConfig,
  type SessionInfo,
  type StrokeVoxel,
} from './types';
import {
  axisExtent,
  initialView,
  sliceShape,
  stepSlice,
  switchAxis,
  voxelToPixel,
  type Dims,
  type ViewState,
} from './view';

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

export function configFromForm(form: {
  classifier: string;
  useCrf: boolean;
  useSpatial: boolean;
  hyperMode: string;
}): PipelineConfig {
  return {
    classifier: form.classifier as PipelineConfig['classifier'],
    use_crf: form.useCrf,
    use_spatial_features: form.useSpatial,
    hyper: { mode: form.hyperMode as 'grid' | 'fixed' },
  };
}

export function formatMetricsRows(metrics: MetricsReport): string[][] {
  const regions: Array<keyof MetricsReport> = ['complete', 'core', 'enhancing'];
  return regions.map((region) => [
    region,
    metrics[region].dice.toFixed(2),
    metrics[region].sensitivity.toFixed(2),
    metrics[region].specificity.toFixed(2),
  ]);
}

class AnnotatorApp {
  private client = new SessionClient('');
  private session: SessionInfo | null = null;
  private view: ViewState = initialView('T1C');
  private activeClass = 1;
  private brushRadius = 3;
  private localStrokes = new Map<string, StrokeVoxel>();
  private pending: StrokeVoxel[] = [];
  private overlayOn = false;
  private busy = false;

  private get dims(): Dims {
    if (!this.session) throw new Error('no session');
    return this.session.dims;
  }

  async start() {
    const fileInput = $<HTMLInputElement>('volume-file');
    fileInput.addEventListener('change', async () => {
      const file = fileInput.files?.[0];
      if (file) {
        await this.openSession(file);
      }
    });
    $<HTMLSelectElement>('axis').addEventListener('change', (ev) => {
      const axis = (ev.target as HTMLSelectElement).value as Axis;
      this.view = switchAxis(this.view, this.dims, axis);
      this.syncSliceRange();
      void this.render();
    });
    $<HTMLInputElement>('slice').addEventListener('input', (ev) => {
      this.view.index = Number((ev.target as HTMLInputElement).value);
      void this.render();
    });
    $<HTMLSelectElement>('modality').addEventListener('change', (ev) => {
      this.view.modality = (ev.target as HTMLSelectElement).value;
      void this.render();
    });
    $<HTMLInputElement>('opacity').addEventListener('input', (ev) => {
      this.view.overlayOpacity = Number((ev.target as HTMLInputElement).value);
      void this.render();
    });
    $<HTMLInputElement>('brush-radius').addEventListener('input', (ev) => {
      this.brushRadius = Number((ev.target as HTMLInputElement).value);
    });
    const classBox = $('classes');
    TISSUE_CLASSES.forEach((cls) => {
      const btn = document.createElement('button');
      btn.textContent = cls.name;
      btn.style.borderColor = cls.color;
      btn.dataset.code = String(cls.code);
      btn.addEventListener('click', () => {
        this.activeClass = cls.code;
        classBox
          .querySelectorAll('button')
          .forEach((b) => b.classList.toggle('active', b === btn));
      });
      if (cls.code === this.activeClass) btn.classList.add('active');
      classBox.appendChild(btn);
    });
    $('commit').addEventListener('click', () => void this.commitStrokes());
    $('clear').addEventListener('click', () => void this.clearStrokes());
    $('run').addEventListener('click', () => void this.runSegmentation());
    $<HTMLInputElement>('truth-file').addEventListener('change', async (ev) => {
      const file = (ev.target as HTMLInputElement).files?.[0];
      if (file) {
        await this.compareWithTruth(file);
      }
    });
    this.wireCanvas();
    document.addEventListener('keydown', (ev) => {
      if (!this.session) return;
      if (ev.key === 'ArrowUp' || ev.key === 'ArrowDown') {
        this.view = stepSlice(this.view, this.dims, ev.key === 'ArrowUp' ? 1 : -1);
        this.syncSliceRange();
        void this.render();
      }
    });
  }

  private toast(text: string, isError = false) {
    const box = $('toast');
    box.textContent = text;
    box.className = isError ? 'toast error' : 'toast';
  }

  private async openSession(file: File) {
    try {
      this.session = await this.client.createSessionFromFile(await file.arrayBuffer());
    } catch (err) {
      this.toast(`upload failed: ${(err as Error).message}`, true);
      return;
    }
    this.localStrokes.clear();
    this.pending = [];
    this.overlayOn = false;
    this.view = initialView(this.session.modalities[0]);
    this.view.index = Math.floor(axisExtent(this.dims, this.view.axis) / 2);
    const modality = $<HTMLSelectElement>('modality');
    modality.innerHTML = '';
    this.session.modalities.forEach((name) => {
      const opt = document.createElement('option');
      opt.value = name;
      opt.textContent = name;
      modality.appendChild(opt);
    });
    this.syncSliceRange();
    this.toast(`session ${this.session.id}: ${this.session.dims.join('x')}`);
    await this.render();
  }

  private syncSliceRange() {
    const slider = $<HTMLInputElement>('slice');
    slider.max = String(axisExtent(this.dims, this.view.axis) - 1);
    slider.value = String(this.view.index);
    $('slice-label').textContent = `${this.view.axis} ${this.view.index}`;
  }

  private wireCanvas() {
    const canvas = $<HTMLCanvasElement>('paint');
    let painting = false;
    let pixels: Array<{ x: number; y: number }> = [];
    const toSlice = (ev: MouseEvent) => {
      const rect = canvas.getBoundingClientRect();
      const { width, height } = sliceShape(this.dims, this.view.axis);
      return {
        x: ((ev.clientX - rect.left) / rect.width) * width,
        y: ((ev.clientY - rect.top) / rect.height) * height,
      };
    };
    canvas.addEventListener('mousedown', (ev) => {
      if (!this.session || this.busy) return;
      painting = true;
      pixels = [toSlice(ev)];
    });
    canvas.addEventListener('mousemove', (ev) => {
      if (painting) {
        pixels.push(toSlice(ev));
      }
    });
    const finish = () => {
      if (!painting) return;
      painting = false;
      const stroke: BrushStroke = {
        classCode: this.activeClass,
        radius: this.brushRadius,
        axis: this.view.axis,
        index: this.view.index,
        pixels,
      };
      const voxels = strokeToVoxels(stroke, this.dims);
      this.pending.push(...voxels);
      this.localStrokes = mergeLocal(this.localStrokes, voxels);
      void this.render();
    };
    canvas.addEventListener('mouseup', finish);
    canvas.addEventListener('mouseleave', finish);
  }

  private async commitStrokes() {
    if (!this.session || this.pending.length === 0) return;
    try {
      const count = await this.client.addStrokes(this.session.id, this.pending);
      this.toast(`committed; server holds ${count} labeled voxels`);
      this.pending = [];
    } catch (err) {
      const e = err as ApiRequestError;
      this.toast(`${e.code ?? 'error'}: ${e.message}`, true);
    }
  }

  private async clearStrokes() {
    if (!this.session) return;
    await this.client.clearStrokes(this.session.id);
    this.localStrokes.clear();
    this.pending = [];
    await this.render();
  }

  private async runSegmentation() {
    if (!this.session || this.busy) return;
    await this.commitStrokes();
    // pre-flight mirror of the server's class-coverage rule
    const server = await this.client.getStrokes(this.session.id);
    let local = new Map<string, StrokeVoxel>();
    local = mergeLocal(local, server.strokes);
    const missing = missingClasses(local);
    if (missing.length > 0) {
      const names = missing.map((c) => TISSUE_CLASSES[c].name).join(', ');
      this.toast(`paint every class first; missing: ${names}`, true);
      return;
    }
    const config = configFromForm({
      classifier: $<HTMLSelectElement>('classifier').value,
      useCrf: $<HTMLInputElement>('use-crf').checked,
      useSpatial: $<HTMLInputElement>('use-spatial').checked,
      hyperMode: $<HTMLSelectElement>('hyper-mode').value,
    });
    this.busy = true;
    const bar = $<HTMLProgressElement>('progress');
    bar.hidden = false;
    try {
      const status = await runAndWatch(this.client, this.session.id, config, {
        onProgress: (f) => {
          bar.value = f;
        },
      });
      if (status.state === 'done') {
        this.overlayOn = true;
        const report = await this.client.getReport(this.session.id);
        this.toast(
          `done in ${report.total_seconds.toFixed(1)}s; ` +
            `hyperparams ${JSON.stringify(report.hyperparams)}`,
        );
      } else {
        this.toast(`segmentation failed: ${status.reason}`, true);
      }
    } catch (err) {
      const e = err as ApiRequestError;
      this.toast(`${e.code ?? 'error'}: ${e.message}`, true);
    } finally {
      this.busy = false;
      bar.hidden = true;
      await this.render();
    }
  }

  private async compareWithTruth(file: File) {
    if (!this.session) return;
    try {
      const metrics = await this.client.getMetrics(
        this.session.id,
        await file.arrayBuffer(),
      );
      const table = $('metrics');
      table.innerHTML =
        '<tr><th>region</th><th>dice</th><th>sens.</th><th>spec.</th></tr>';
      for (const row of formatMetricsRows(metrics)) {
        const tr = document.createElement('tr');
        tr.innerHTML = row.map((c) => `<td>${c}</td>`).join('');
        table.appendChild(tr);
      }
    } catch (err) {
      const e = err as ApiRequestError;
      this.toast(`${e.code ?? 'error'}: ${e.message}`, true);
    }
  }

  private async render() {
    if (!this.session) return;
    const { width, height } = sliceShape(this.dims, this.view.axis);
    const base = $<HTMLImageElement>('slice-img');
    base.src = this.client.sliceUrl(
      this.session.id,
      this.view.axis,
      this.view.index,
      this.view.modality,
    );
    const overlay = $<HTMLImageElement>('overlay-img');
    if (this.overlayOn) {
      overlay.src = this.client.sliceUrl(
        this.session.id,
        this.view.axis,
        this.view.index,
        'overlay',
      );
      overlay.style.opacity = String(this.view.overlayOpacity);
      overlay.hidden = false;
    } else {
      overlay.hidden = true;
    }
    // stroke echo on the paint canvas
    const canvas = $<HTMLCanvasElement>('paint');
    canvas.width = width;
    canvas.height = height;
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, width, height);
    this.localStrokes.forEach((v) => {
      const pix = voxelToPixel(this.view.axis, [v.i, v.j, v.k]);
      if (pix.index !== this.view.index) return;
      ctx.fillStyle = TISSUE_CLASSES[v.label].color;
      ctx.fillRect(pix.x, pix.y, 1, 1);
    });
    $('stroke-count').textContent = String(this.localStrokes.size);
    $('class-coverage').textContent = [...classesPresent(this.localStrokes)]
      .sort()
      .map((c) => TISSUE_CLASSES[c].name)
      .join(', ');
  }
}

if (typeof document !== 'undefined' && document.getElementById('paint')) {
  void new AnnotatorApp().start();
}
