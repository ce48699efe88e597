"""Beat-trio streaming.

Walks the transmission state machine over a label script: each PVC is sent
together with its neighbours, decisions trail ingestion by two beats, and
nothing leaves the device until the PVC count passes the threshold.
"""
from pvcdict import parse_label_script, run_stream, worst_case_overhead

script = "NNNVNNNNVVNNNNNNVN"
labels = parse_label_script(script)
for th in (0, 1, 3):
    trace = run_stream(list(range(len(labels))), labels, th=th)
    sent = sorted(e.index for e in trace.transmitted)
    print(f"threshold {th}: first notification at beat {trace.first_notification}, sent {sent}")

trace = run_stream(list(range(len(labels))), labels, th=0)
print("labels ", script)
print("flags  ", "".join(map(str, trace.flags)))
print("extra delimiter beats per PVC run:", worst_case_overhead(labels) - script.count("V"))

trace = run_stream(list(range(200)), ["N"] * 200, th=0, n_th=120)
print(f"all-normal stream with a 120-beat limit stops at beat {trace.stopped_at}")
