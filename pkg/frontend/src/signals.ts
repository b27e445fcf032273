// No-sensor mode: a virtual wearable. The arousal slider drives synthetic
// pulse and conductance streams with the same couplings the engine's
// synthetic trainees use (+60% HR and -50% SDNN at full arousal, a
// conductance rise toward 1.5x base), so a human can play without hardware.
// With real sensors the console would forward samples instead; the server
// cannot tell the difference.

export interface Sample {
    tMs: number;
    value: number;
}

// Deterministic PRNG (mulberry32) so test sessions are reproducible.
function mulberry32(seed: number): () => number {
    let a = seed >>> 0;
    return () => {
        a = (a + 0x6d2b79f5) >>> 0;
        let t = a;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

function gaussianPair(rng: () => number): [number, number] {
    const u = Math.max(rng(), 1e-12);
    const v = rng();
    const r = Math.sqrt(-2 * Math.log(u));
    return [r * Math.cos(2 * Math.PI * v), r * Math.sin(2 * Math.PI * v)];
}

export class VirtualSensor {
    arousal = 0;

    private readonly rng: () => number;
    private readonly restingHr: number;
    private readonly restingSdnn: number;
    private readonly ppgSpacing = 8;    // 125 Hz
    private readonly gsrSpacing = 40;   // 25 Hz
    private readonly pulseSigma = 45;
    private beats: number[] = [];
    private beatCursor = 0;
    private nextPpgIndex = 0;
    private nextGsrIndex = 0;
    private gsrLevel: number;
    private spareGauss: number | null = null;

    constructor(seed: number, restingHr = 70, restingSdnn = 50,
                private readonly gsrBase = 2.0, private readonly gsrGain = 0.5) {
        this.rng = mulberry32(seed);
        this.restingHr = restingHr;
        this.restingSdnn = restingSdnn;
        this.gsrLevel = gsrBase;
    }

    setArousal(arousal: number) {
        this.arousal = Math.min(Math.max(arousal, 0), 1);
    }

    private gauss(): number {
        if (this.spareGauss !== null) {
            const value = this.spareGauss;
            this.spareGauss = null;
            return value;
        }
        const [a, b] = gaussianPair(this.rng);
        this.spareGauss = b;
        return a;
    }

    private hrTarget(): number {
        return this.restingHr * (1 + 0.6 * this.arousal);
    }

    private sdnnTarget(): number {
        return this.restingSdnn * (1 - 0.5 * this.arousal);
    }

    private scheduleBeats(untilMs: number) {
        while (this.beatCursor < untilMs + 6 * this.pulseSigma) {
            const interval = Math.max(
                60000 / this.hrTarget() + this.gauss() * this.sdnnTarget(), 300);
            this.beatCursor += interval;
            this.beats.push(this.beatCursor);
        }
        if (this.beats.length > 512) {
            this.beats = this.beats.slice(this.beats.length - 256);
        }
    }

    ppgUntil(tMs: number): Sample[] {
        const lastIndex = Math.ceil(tMs / this.ppgSpacing) - 1;
        const out: Sample[] = [];
        if (lastIndex < this.nextPpgIndex) return out;
        this.scheduleBeats(lastIndex * this.ppgSpacing);
        for (let i = this.nextPpgIndex; i <= lastIndex; i++) {
            const t = i * this.ppgSpacing;
            let v = 0;
            for (const b of this.beats) {
                const d = (t - b) / this.pulseSigma;
                if (d > -5 && d < 5) v += Math.exp(-0.5 * d * d);
            }
            out.push({ tMs: t, value: v });
        }
        this.nextPpgIndex = lastIndex + 1;
        return out;
    }

    gsrUntil(tMs: number): Sample[] {
        const lastIndex = Math.ceil(tMs / this.gsrSpacing) - 1;
        const out: Sample[] = [];
        if (lastIndex < this.nextGsrIndex) return out;
        const target = this.gsrBase * (1 + this.gsrGain * this.arousal);
        const alpha = 1 - Math.exp(-this.gsrSpacing / 500);
        for (let i = this.nextGsrIndex; i <= lastIndex; i++) {
            this.gsrLevel += (target - this.gsrLevel) * alpha;
            const noisy = Math.max(this.gsrLevel + this.gauss() * 0.004, 0);
            out.push({ tMs: i * this.gsrSpacing, value: noisy });
        }
        this.nextGsrIndex = lastIndex + 1;
        return out;
    }
}
